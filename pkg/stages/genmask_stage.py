"""
Mask Generation Stage

Samples new semantic masks from the mask model, keeps those passing
the pathology filter and reports their class-frequency distance from the
training masks.
"""

import logging
from pathlib import Path
from typing import Callable, List, Optional, Tuple

from data.config_manager import PipelineConfig
from data.exporter import DataExporter
from data.images import save_mask
from maskgen.filter import PathologyFilterConfig, frequency_fidelity
from maskgen.generator import MaskGenerationError, MaskGenerator
from phantom.dataset import DatasetManifest, ManifestRecord
from utils.seeding import torch_generator
from .base_stage import (DATASET_MANIFEST, GENMASK_MANIFEST, GENMASK_REPORT, MASKGEN_CKPT,
                         BaseStage, StageContext, StageResult)

logger = logging.getLogger(__name__)


class GenmaskStage(BaseStage):
    """Filtered de-novo mask sampling."""

    stage_id = 'genmask'
    section = 'maskgen'

    def get_name(self) -> str:
        return "Mask Generation"

    def get_description(self) -> str:
        return "Sample masks from the mask model and keep those passing the pathology filter"

    def validate_config(self, config: PipelineConfig) -> Tuple[bool, str]:
        section = config.section('maskgen')
        if int(section['n']) < 0:
            return False, "maskgen.n must be >= 0"
        if int(section['sample_batch']) < 1:
            return False, "maskgen.sample_batch must be >= 1"
        if not 0.0 <= float(section['max_class_tv']) <= 1.0:
            return False, "maskgen.max_class_tv must be in [0, 1]"
        try:
            PathologyFilterConfig.from_config(section)
        except (KeyError, ValueError) as e:
            return False, f"pathology filter: {e}"
        return True, ""

    def estimate_duration(self, config: PipelineConfig) -> float:
        return 0.5 * int(config.get('maskgen', 'n'))

    def inputs(self, ctx: StageContext) -> List[Tuple[Path, str]]:
        return [(ctx.path(MASKGEN_CKPT), 'train-maskgen'), (ctx.path(DATASET_MANIFEST), 'dataset')]

    def outputs(self, ctx: StageContext) -> List[Path]:
        return [ctx.path(GENMASK_MANIFEST), ctx.path(GENMASK_REPORT)]

    def run(self, ctx: StageContext, progress_callback: Optional[Callable] = None) -> StageResult:
        section = ctx.config.section('maskgen')
        model, sched, _ = ctx.load_model(MASKGEN_CKPT, 'train-maskgen')
        generator = MaskGenerator(model, sched, ctx.canvas_hw(),
                                  PathologyFilterConfig.from_config(section),
                                  batch_size=int(section['sample_batch']))
        seed = ctx.seed('genmask')
        out_dir = ctx.session.stage_dir('genmask')
        report_path = ctx.path(GENMASK_REPORT)

        try:
            masks = generator.generate(int(section['n']), torch_generator(seed))
        except MaskGenerationError:
            DataExporter.export_json({**generator.report.to_dict(),
                                      'config_hash': ctx.config_hash}, report_path)
            raise

        records = []
        outputs = []
        for i, mask in enumerate(masks):
            sample_id = f"m{i:05d}"
            rel = f"masks/{sample_id}.png"
            save_mask(out_dir / rel, mask)
            outputs.append(out_dir / rel)
            records.append(ManifestRecord(id=sample_id, mask=rel, image=None, split='train',
                                          seed=seed, index=i))
            self._update_progress(progress_callback, 100.0 * (i + 1) / len(masks), sample_id)

        DatasetManifest(out_dir, records, config_hash=ctx.config_hash,
                        kind='genmask').write(ctx.path(GENMASK_MANIFEST))

        dataset = ctx.read_manifest(DATASET_MANIFEST, 'dataset')
        training = (dataset.load_mask(r) for r in dataset.split('train'))
        fidelity = frequency_fidelity(masks, training, float(section['max_class_tv']))
        if masks and not fidelity['within_class_tv']:
            logger.warning("generated class mix is %.3f (TV) from the training masks, above %.3f",
                           fidelity['class_tv'], fidelity['max_class_tv'], extra=fidelity)
        report = {**generator.report.to_dict(), **fidelity, 'config_hash': ctx.config_hash}
        DataExporter.export_json(report, report_path)
        return StageResult(self.outputs(ctx) + outputs, {
            'accepted': report['accepted'],
            'attempts': report['attempts'],
            'acceptance_rate': report['acceptance_rate'],
            'class_tv': report['class_tv'],
        })
