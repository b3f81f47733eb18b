"""
Training Stages

Denoiser training on paired (image, mask, context) triples, and the
unconditional mask model used for de-novo mask generation.
"""

import logging
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from data.config_manager import PipelineConfig
from diffusion.checkpoint import save_checkpoint
from diffusion.conditioning import GuidanceConfig, context_tensor, onehot_tensor, to_model_range
from diffusion.model import build_denoiser
from diffusion.schedule import NoiseSchedule
from diffusion.trainer import DiffusionData, DiffusionTrainer
from maskgen.generator import train_mask_model
from .base_stage import (DATASET_MANIFEST, DENOISER_CKPT, DENOISER_LOG, MASKGEN_CKPT,
                         MASKGEN_LOG, PAIRED_MANIFEST, BaseStage, StageContext, StageResult)

logger = logging.getLogger(__name__)


def _check_training(section: dict) -> Tuple[bool, str]:
    if int(section['timesteps']) < 1:
        return False, "timesteps must be >= 1"
    if int(section['steps']) < 1:
        return False, "steps must be >= 1"
    if int(section['batch_size']) < 1:
        return False, "batch_size must be >= 1"
    if float(section['lr']) <= 0:
        return False, "lr must be > 0"
    if int(section['levels']) < 1 or int(section['base_channels']) < 1:
        return False, "levels and base_channels must be >= 1"
    return True, ""


class TrainStage(BaseStage):
    """Context-semantic conditioned denoiser."""

    stage_id = 'train'
    section = 'diffusion'

    def get_name(self) -> str:
        return "Denoiser Training"

    def get_description(self) -> str:
        return "Train the mask- and context-conditioned denoiser with conditioning dropout"

    def validate_config(self, config: PipelineConfig) -> Tuple[bool, str]:
        section = config.section('diffusion')
        valid, error = _check_training(section)
        if not valid:
            return valid, error
        p_context = float(section['p_drop_context'])
        p_both = float(section['p_drop_both'])
        if p_context < 0 or p_both < 0 or p_context + p_both > 1:
            return False, "p_drop_context and p_drop_both must be >= 0 and sum to <= 1"
        try:
            GuidanceConfig(**config.section('guidance'))
        except (TypeError, ValueError) as e:
            return False, f"guidance: {e}"
        return True, ""

    def estimate_duration(self, config: PipelineConfig) -> float:
        return 0.3 * int(config.get('diffusion', 'steps'))

    def inputs(self, ctx: StageContext) -> List[Tuple[Path, str]]:
        return [(ctx.path(PAIRED_MANIFEST), 'pair')]

    def outputs(self, ctx: StageContext) -> List[Path]:
        return [ctx.path(DENOISER_CKPT), ctx.path(DENOISER_LOG)]

    def run(self, ctx: StageContext, progress_callback: Optional[Callable] = None) -> StageResult:
        section = ctx.config.section('diffusion')
        paired = ctx.read_manifest(PAIRED_MANIFEST, 'pair', root=DATASET_MANIFEST)
        records = paired.split('train')

        images = np.stack([paired.load_image(r) for r in records])
        masks = np.stack([paired.load_mask(r) for r in records])
        contexts = np.stack([paired.load_image(paired.by_id(r.context_id)) for r in records])
        data = DiffusionData(to_model_range(context_tensor(images)),
                             onehot_tensor(masks), context_tensor(contexts))

        seed = ctx.seed('train')
        sched = NoiseSchedule.linear(int(section['timesteps']))
        model = build_denoiser(section, seed)
        trainer = DiffusionTrainer(model, sched, seed=ctx.seed('train/batches'),
                                   lr=float(section['lr']),
                                   batch_size=int(section['batch_size']),
                                   p_context=float(section['p_drop_context']),
                                   p_both=float(section['p_drop_both']),
                                   log_every=int(section['log_every']))
        logger.info("training denoiser (%d parameters) on %d triples",
                    model.num_parameters(), len(data))
        losses = trainer.fit(data, int(section['steps']), log_path=ctx.path(DENOISER_LOG),
                             metadata={'config_hash': ctx.config_hash, 'stage': self.stage_id,
                                       'seed': seed},
                             progress_callback=lambda p, m: self._update_progress(
                                 progress_callback, p, m))

        save_checkpoint(ctx.path(DENOISER_CKPT), model, sched, ctx.config_hash,
                        extra={'guidance': ctx.config.section('guidance'),
                               'steps': len(losses)})
        return StageResult(self.outputs(ctx), {
            'examples': len(data),
            'parameters': model.num_parameters(),
            'first_loss': losses[0],
            'final_loss': losses[-1],
        })


class TrainMaskgenStage(BaseStage):
    """Unconditional diffusion model over one-hot masks."""

    stage_id = 'train-maskgen'
    section = 'maskgen'

    def get_name(self) -> str:
        return "Mask Model Training"

    def get_description(self) -> str:
        return "Train the unconditional mask model on training-split label masks"

    def validate_config(self, config: PipelineConfig) -> Tuple[bool, str]:
        return _check_training(config.section('maskgen'))

    def estimate_duration(self, config: PipelineConfig) -> float:
        return 0.2 * int(config.get('maskgen', 'steps'))

    def inputs(self, ctx: StageContext) -> List[Tuple[Path, str]]:
        return [(ctx.path(DATASET_MANIFEST), 'dataset')]

    def outputs(self, ctx: StageContext) -> List[Path]:
        return [ctx.path(MASKGEN_CKPT), ctx.path(MASKGEN_LOG)]

    def run(self, ctx: StageContext, progress_callback: Optional[Callable] = None) -> StageResult:
        section = ctx.config.section('maskgen')
        manifest = ctx.read_manifest(DATASET_MANIFEST, 'dataset')
        masks = [manifest.load_mask(r) for r in manifest.split('train')]

        seed = ctx.seed('train-maskgen')
        model, sched, losses = train_mask_model(
            masks, section, seed, log_path=ctx.path(MASKGEN_LOG),
            metadata={'config_hash': ctx.config_hash, 'stage': self.stage_id, 'seed': seed},
            progress_callback=lambda p, m: self._update_progress(progress_callback, p, m))

        save_checkpoint(ctx.path(MASKGEN_CKPT), model, sched, ctx.config_hash,
                        extra={'steps': len(losses)})
        return StageResult(self.outputs(ctx), {
            'examples': len(masks),
            'parameters': model.num_parameters(),
            'final_loss': losses[-1],
        })
