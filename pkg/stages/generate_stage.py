"""
Image Generation Stage

Renders synthetic images with dual guidance from generated (or paired)
masks and training-split context images.
"""

import logging
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from data.config_manager import PipelineConfig
from data.images import save_image, save_mask
from diffusion.conditioning import ConditionPair, GuidanceConfig
from diffusion.sampler import sample
from phantom.dataset import DatasetManifest, ManifestRecord
from utils.seeding import numpy_rng, torch_generator
from .base_stage import (DATASET_MANIFEST, DENOISER_CKPT, GENMASK_MANIFEST, PAIRED_MANIFEST,
                         SYNTHETIC_MANIFEST, BaseStage, StageContext, StageResult)

logger = logging.getLogger(__name__)

SOURCES = ('genmask', 'paired')


class GenerateStage(BaseStage):
    """Guided sampling of the synthetic training set."""

    stage_id = 'generate'
    section = 'generate'

    def get_name(self) -> str:
        return "Image Generation"

    def get_description(self) -> str:
        return "Sample images from masks and context images with context-semantic guidance"

    def validate_config(self, config: PipelineConfig) -> Tuple[bool, str]:
        section = config.section('generate')
        if section['source'] not in SOURCES:
            return False, f"generate.source must be one of {SOURCES}, got {section['source']!r}"
        if int(section['n']) < 0:
            return False, "generate.n must be >= 0"
        if int(section['batch_size']) < 1:
            return False, "generate.batch_size must be >= 1"
        try:
            GuidanceConfig(**config.section('guidance'))
        except (TypeError, ValueError) as e:
            return False, f"guidance: {e}"
        return True, ""

    def estimate_duration(self, config: PipelineConfig) -> float:
        return 0.2 * int(config.get('generate', 'n'))

    def inputs(self, ctx: StageContext) -> List[Tuple[Path, str]]:
        needed = [(ctx.path(DENOISER_CKPT), 'train'), (ctx.path(PAIRED_MANIFEST), 'pair')]
        if ctx.config.get('generate', 'source') == 'genmask':
            needed.append((ctx.path(GENMASK_MANIFEST), 'genmask'))
        return needed

    def outputs(self, ctx: StageContext) -> List[Path]:
        return [ctx.path(SYNTHETIC_MANIFEST)]

    def _conditions(self, ctx: StageContext, paired: DatasetManifest, n: int):
        """(mask source id, mask, context record) for every sample to generate."""
        train = paired.split('train')
        if not train:
            raise ValueError("Paired manifest has no training records for contexts")

        if ctx.config.get('generate', 'source') == 'paired':
            for i in range(n):
                record = train[i % len(train)]
                yield record.id, paired.load_mask(record), paired.by_id(record.context_id)
            return

        genmask = ctx.read_manifest(GENMASK_MANIFEST, 'genmask')
        if len(genmask) < n:
            logger.warning("only %d generated masks for %d requested images", len(genmask), n)
        records = genmask.records[:n]
        # Generated masks have no image of their own; draw contexts from the training split.
        picks = numpy_rng(ctx.seed('generate/contexts')).integers(len(train), size=len(records))
        for record, pick in zip(records, picks):
            yield record.id, genmask.load_mask(record), train[int(pick)]

    def run(self, ctx: StageContext, progress_callback: Optional[Callable] = None) -> StageResult:
        section = ctx.config.section('generate')
        model, sched, _ = ctx.load_model(DENOISER_CKPT, 'train')
        guidance = GuidanceConfig(**ctx.config.section('guidance'))
        paired = ctx.read_manifest(PAIRED_MANIFEST, 'pair', root=DATASET_MANIFEST)
        conditions = list(self._conditions(ctx, paired, int(section['n'])))

        out_dir = ctx.session.stage_dir('generate')
        seed = ctx.seed('generate')
        gen = torch_generator(seed)
        batch_size = int(section['batch_size'])
        records = []
        outputs = []
        for start in range(0, len(conditions), batch_size):
            chunk = conditions[start:start + batch_size]
            masks = np.stack([mask for _, mask, _ in chunk])
            contexts = np.stack([paired.load_image(c) for _, _, c in chunk])
            images = sample(model, ConditionPair(semantic=masks, context=contexts),
                            guidance, sched, gen)
            for offset, ((source_id, mask, context), image) in enumerate(zip(chunk, images)):
                index = start + offset
                sample_id = f"g{index:05d}"
                mask_rel = f"masks/{sample_id}.png"
                image_rel = f"images/{sample_id}.png"
                save_mask(out_dir / mask_rel, mask)
                save_image(out_dir / image_rel, image)
                outputs.extend([out_dir / mask_rel, out_dir / image_rel])
                records.append(ManifestRecord(
                    id=sample_id, mask=mask_rel, image=image_rel, split='train',
                    seed=seed, index=index, context_id=context.id,
                    extra={'source': section['source'], 'mask_id': source_id}))
            self._update_progress(progress_callback,
                                  100.0 * len(records) / len(conditions),
                                  f"{len(records)}/{len(conditions)} images")

        DatasetManifest(out_dir, records, config_hash=ctx.config_hash,
                        kind='synthetic').write(ctx.path(SYNTHETIC_MANIFEST))
        return StageResult(self.outputs(ctx) + outputs, {
            'n': len(records),
            'source': section['source'],
            'guidance': {'s_S': guidance.s_S, 's_C': guidance.s_C},
        })
