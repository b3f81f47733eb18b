"""
Dataset Stage

Generates the phantom dataset (masks, images, manifest).
"""

from pathlib import Path
from typing import Callable, List, Optional, Tuple

from data.config_manager import PipelineConfig
from phantom.dataset import build_dataset, split_counts
from phantom.geometry import PhantomParams
from .base_stage import DATASET_MANIFEST, BaseStage, StageContext, StageResult


class DatasetStage(BaseStage):
    """Procedural phantom dataset with a train/test split."""

    stage_id = 'dataset'
    section = 'dataset'

    def get_name(self) -> str:
        return "Phantom Dataset"

    def get_description(self) -> str:
        return "Render labelled phantom masks and speckle images with a train/test split"

    def validate_config(self, config: PipelineConfig) -> Tuple[bool, str]:
        section = config.section('dataset')
        try:
            split_counts(int(section['n']), (float(section['train_frac']),
                                             float(section['test_frac'])))
            PhantomParams.from_config(config.section('phantom'), seed=0)
        except (TypeError, ValueError) as e:
            return False, str(e)
        return True, ""

    def estimate_duration(self, config: PipelineConfig) -> float:
        return 0.01 * int(config.get('dataset', 'n'))

    def inputs(self, ctx: StageContext) -> List[Tuple[Path, str]]:
        return []

    def outputs(self, ctx: StageContext) -> List[Path]:
        return [ctx.path(DATASET_MANIFEST)]

    def run(self, ctx: StageContext, progress_callback: Optional[Callable] = None) -> StageResult:
        section = ctx.config.section('dataset')
        params = PhantomParams.from_config(ctx.config.section('phantom'), ctx.seed('dataset'))
        out_dir = ctx.session.stage_dir('dataset')
        manifest = build_dataset(params, int(section['n']),
                                 (float(section['train_frac']), float(section['test_frac'])),
                                 out_dir, config_hash=ctx.config_hash)
        self._update_progress(progress_callback, 100, f"{len(manifest)} phantoms")

        outputs = [ctx.path(DATASET_MANIFEST)]
        for record in manifest:
            outputs.extend([out_dir / record.mask, out_dir / record.image])
        return StageResult(outputs, {
            'n': len(manifest),
            'train': len(manifest.split('train')),
            'test': len(manifest.split('test')),
        })
