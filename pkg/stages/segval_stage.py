"""
Segmentation Validation Stage

Trains segmenters on real-only and real-plus-synthetic data and compares
mean DSC on the real test split.
"""

from pathlib import Path
from typing import Callable, List, Optional, Tuple

from data.config_manager import PipelineConfig
from segval.experiment import ExperimentSpec, compare_arms
from .base_stage import DATASET_MANIFEST, SYNTHETIC_MANIFEST, BaseStage, StageContext, StageResult


class SegvalStage(BaseStage):
    """Downstream segmentation benefit of the synthetic data."""

    stage_id = 'segval'
    section = 'segval'

    def get_name(self) -> str:
        return "Segmentation Validation"

    def get_description(self) -> str:
        return "Compare segmenters trained with and without synthetic images over several seeds"

    def validate_config(self, config: PipelineConfig) -> Tuple[bool, str]:
        section = config.section('segval')
        if len(section['seeds']) < 3:
            return False, "segval.seeds needs at least 3 seeds"
        if int(section['epochs']) < 0:
            return False, "segval.epochs must be >= 0"
        if not 0.0 <= float(section['val_frac']) < 1.0:
            return False, "segval.val_frac must be in [0, 1)"
        limit = section['real_train_limit']
        if limit is not None and int(limit) < 2:
            return False, "segval.real_train_limit must be >= 2 or null"
        if not section['classes'] or any(not 0 <= int(c) < 8 for c in section['classes']):
            return False, "segval.classes must list class values in 0..7"
        return True, ""

    def estimate_duration(self, config: PipelineConfig) -> float:
        section = config.section('segval')
        return 2.0 * len(section['seeds']) * int(section['epochs']) * 2

    def inputs(self, ctx: StageContext) -> List[Tuple[Path, str]]:
        return [(ctx.path(DATASET_MANIFEST), 'dataset'), (ctx.path(SYNTHETIC_MANIFEST), 'generate')]

    def outputs(self, ctx: StageContext) -> List[Path]:
        out = ctx.session.run_dir / 'segval'
        return [out / 'comparison.json', out / 'comparison.csv']

    def run(self, ctx: StageContext, progress_callback: Optional[Callable] = None) -> StageResult:
        real = ctx.read_manifest(DATASET_MANIFEST, 'dataset')
        synthetic = ctx.read_manifest(SYNTHETIC_MANIFEST, 'generate')
        spec = ExperimentSpec.from_config(ctx.config.section('segval'), real, synthetic,
                                          subset_seed=ctx.seed('segval'))

        out_dir = ctx.session.stage_dir('segval')
        log_dir = out_dir / 'logs'
        report = compare_arms(spec, log_dir=log_dir,
                              progress_callback=lambda p, m: self._update_progress(
                                  progress_callback, p, m))
        report.metadata = {'config_hash': ctx.config_hash}
        report.save(out_dir)

        logs = sorted(log_dir.glob('*.csv'))
        return StageResult(self.outputs(ctx) + logs, {
            'delta': report.delta,
            'improved': report.improved,
        })
