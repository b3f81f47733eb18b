"""
Evaluation Stage

Scores guided samples and an unconditional baseline from the same
denoiser against held-out real phantoms in a fixed embedding space.
"""

from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from data.config_manager import PipelineConfig
from diffusion.conditioning import ConditionPair, GuidanceConfig, to_unit_range
from diffusion.sampler import sample, sample_unconditional
from metrics.embedding import embed_images
from metrics.quality import compare_reports, plot_projection, quality_report, write_reports
from style.conv_stack import ConvStack
from utils.seeding import torch_generator
from .base_stage import (DATASET_MANIFEST, DENOISER_CKPT, PAIRED_MANIFEST, BaseStage,
                         StageContext, StageResult)


class EvaluateStage(BaseStage):
    """Distribution-level quality of generated images."""

    stage_id = 'evaluate'
    section = 'evaluate'

    def get_name(self) -> str:
        return "Quality Evaluation"

    def get_description(self) -> str:
        return "Compare guided and unconditional samples with held-out real images (KS, KL, Frechet, hull overlap)"

    def validate_config(self, config: PipelineConfig) -> Tuple[bool, str]:
        section = config.section('evaluate')
        if int(section['n']) < 3:
            return False, "evaluate.n must be >= 3 (hulls need three points)"
        if int(section['kld_bins']) < 1 or int(section['grid']) < 2:
            return False, "evaluate.kld_bins must be >= 1 and evaluate.grid >= 2"
        if float(section['min_samples_ratio']) < 0:
            return False, "evaluate.min_samples_ratio must be >= 0"
        if int(section['batch_size']) < 1:
            return False, "evaluate.batch_size must be >= 1"
        return True, ""

    def estimate_duration(self, config: PipelineConfig) -> float:
        return 0.4 * int(config.get('evaluate', 'n'))

    def inputs(self, ctx: StageContext) -> List[Tuple[Path, str]]:
        return [(ctx.path(DENOISER_CKPT), 'train'), (ctx.path(PAIRED_MANIFEST), 'pair')]

    def outputs(self, ctx: StageContext) -> List[Path]:
        out = ctx.session.run_dir / 'evaluate'
        return [out / 'quality.json', out / 'quality.csv', out / 'projection.svg']

    def run(self, ctx: StageContext, progress_callback: Optional[Callable] = None) -> StageResult:
        section = ctx.config.section('evaluate')
        model, sched, _ = ctx.load_model(DENOISER_CKPT, 'train')
        guidance = GuidanceConfig(**ctx.config.section('guidance'))
        paired = ctx.read_manifest(PAIRED_MANIFEST, 'pair', root=DATASET_MANIFEST)

        records = paired.split('test')[:int(section['n'])]
        if len(records) < 3:
            raise ValueError(f"Quality evaluation needs >= 3 test images, found {len(records)}")
        real = np.stack([paired.load_image(r) for r in records])
        masks = np.stack([paired.load_mask(r) for r in records])
        contexts = np.stack([paired.load_image(paired.by_id(r.context_id)) for r in records])

        gen = torch_generator(ctx.seed('evaluate'))
        batch_size = int(section['batch_size'])
        h, w = real.shape[1:]
        guided, baseline = [], []
        for start in range(0, len(records), batch_size):
            stop = min(start + batch_size, len(records))
            guided.append(sample(model, ConditionPair(semantic=masks[start:stop],
                                                      context=contexts[start:stop]),
                                 guidance, sched, gen))
            self._update_progress(progress_callback, 50.0 * stop / len(records), "guided")
        for start in range(0, len(records), batch_size):
            stop = min(start + batch_size, len(records))
            x = sample_unconditional(model, (stop - start, 1, h, w), sched, gen)
            baseline.append(to_unit_range(x)[:, 0])
            self._update_progress(progress_callback, 50.0 + 50.0 * stop / len(records),
                                  "unconditional")

        stack = ConvStack.from_config(ctx.config.section('style'))
        arms = {
            'csg': embed_images(np.concatenate(guided), stack, batch_size),
            'unconditional': embed_images(np.concatenate(baseline), stack, batch_size),
        }
        real_emb = embed_images(real, stack, batch_size)
        reports = [quality_report(real_emb, emb, label, int(section['kld_bins']),
                                  int(section['grid']), float(section['min_samples_ratio']))
                   for label, emb in arms.items()]
        comparison = compare_reports(reports[0], reports[1])

        out_dir = ctx.session.stage_dir('evaluate')
        write_reports(reports, out_dir, metadata={'config_hash': ctx.config_hash,
                                                  'n_test': len(records)},
                      comparison=comparison)
        plot_projection(real_emb, arms, out_dir / 'projection.svg')
        return StageResult(self.outputs(ctx), {
            'frechet': {r.label: r.frechet for r in reports},
            'frechet_improved': comparison['frechet_improved'],
            'flags': {r.label: r.flags for r in reports if r.flags},
            'metrics_agreeing': comparison['metrics_agreeing'],
        })
