"""
Mask Generation

An unconditional denoiser trained on one-hot label fields samples new
masks from noise. Samples are quantized, majority-smoothed and kept only
when they pass the pathology filter.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from diffusion.conditioning import to_model_range
from diffusion.model import DenoiserModel, build_denoiser
from diffusion.sampler import sample_unconditional
from diffusion.schedule import NoiseSchedule
from diffusion.trainer import DiffusionData, DiffusionTrainer
from phantom.classes import ClassId, NUM_CLASSES
from .filter import PathologyFilterConfig, class_frequency, passes_filter
from .soft_mask import encode_onehot, majority_smooth, quantize_mask

logger = logging.getLogger(__name__)

ATTEMPTS_PER_MASK = 100


class MaskGenerationError(RuntimeError):
    """Rejection sampling hit its attempt cap."""

    def __init__(self, attempts: int, accepted: int, requested: int):
        self.attempts = attempts
        self.accepted = accepted
        self.requested = requested
        rate = accepted / attempts if attempts else 0.0
        super().__init__(
            f"Accepted {accepted}/{requested} masks after {attempts} attempts "
            f"(acceptance rate {rate:.4f}); relax the pathology filter or retrain the mask model")


@dataclass
class GenerationReport:
    attempts: int = 0
    accepted: int = 0
    class_frequency: List[float] = field(default_factory=lambda: [0.0] * NUM_CLASSES)
    filter: Dict = field(default_factory=dict)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0

    def to_dict(self) -> Dict:
        return {
            'attempts': self.attempts,
            'accepted': self.accepted,
            'acceptance_rate': self.acceptance_rate,
            'class_frequency': {ClassId(i).label: float(f)
                                for i, f in enumerate(self.class_frequency)},
            'filter': self.filter,
        }


def train_mask_model(masks: Sequence[np.ndarray], section: Dict, seed: int,
                     log_path: Optional[Path] = None, metadata: Optional[Dict] = None,
                     progress_callback: Optional[Callable[[float, str], None]] = None
                     ) -> Tuple[DenoiserModel, NoiseSchedule, List[float]]:
    """
    Train an unconditional denoiser on one-hot mask fields.

    Args:
        masks: Training label masks
        section: 'maskgen' config section
        seed: Stage seed (initialization and batches)

    Returns:
        (model, schedule, per-step losses)
    """
    if not masks:
        raise ValueError("No training masks")
    sched = NoiseSchedule.linear(int(section['timesteps']))
    model = build_denoiser(section, seed, image_channels=NUM_CLASSES, conditioned=False)
    x0 = to_model_range(torch.as_tensor(np.stack([encode_onehot(m) for m in masks]),
                                        dtype=torch.float32))
    trainer = DiffusionTrainer(model, sched, seed=seed, lr=float(section['lr']),
                               batch_size=int(section['batch_size']),
                               p_context=0.0, p_both=0.0)
    losses = trainer.fit(DiffusionData(x0), int(section['steps']), log_path=log_path,
                         metadata=metadata, progress_callback=progress_callback)
    return model, sched, losses


class MaskGenerator:
    """Rejection sampler over an unconditional mask model."""

    def __init__(self, mask_model, sched: NoiseSchedule, canvas: Tuple[int, int],
                 filter_cfg: PathologyFilterConfig, batch_size: int = 16, smooth: bool = True):
        """
        Args:
            mask_model: Epsilon model over (B, 8, H, W) fields
            sched: Its noise schedule
            canvas: (height, width)
            filter_cfg: Pathology filter
            batch_size: Candidates sampled per chain run
            smooth: Apply 3x3 majority smoothing after quantization
        """
        self.model = mask_model
        self.sched = sched
        self.canvas = tuple(canvas)
        self.filter_cfg = filter_cfg
        self.batch_size = max(1, int(batch_size))
        self.smooth = smooth
        self.report = GenerationReport(filter=filter_cfg.to_dict())

    def candidates(self, count: int, gen: torch.Generator) -> List[np.ndarray]:
        fields = sample_unconditional(self.model, (count, NUM_CLASSES) + self.canvas,
                                      self.sched, gen)
        out = []
        for soft in fields:
            mask = quantize_mask(soft)
            out.append(majority_smooth(mask) if self.smooth else mask)
        return out

    def generate(self, n: int, rng) -> List[np.ndarray]:
        """
        Sample exactly n masks that pass the filter.

        Raises:
            MaskGenerationError: more than 100 * n candidates were needed
        """
        if n < 0:
            raise ValueError(f"n must be >= 0, got {n}")
        gen = rng if isinstance(rng, torch.Generator) else torch.Generator().manual_seed(int(rng))
        cap = ATTEMPTS_PER_MASK * n
        accepted: List[np.ndarray] = []
        attempts = 0

        while len(accepted) < n:
            if attempts >= cap:
                self._finish(attempts, accepted)
                raise MaskGenerationError(attempts, len(accepted), n)
            count = min(self.batch_size, cap - attempts)
            for mask in self.candidates(count, gen):
                if len(accepted) == n:
                    break
                attempts += 1
                if passes_filter(mask, self.filter_cfg):
                    accepted.append(mask)
            logger.debug("mask sampling: %d/%d accepted after %d attempts",
                         len(accepted), n, attempts)

        self._finish(attempts, accepted)
        logger.info("Generated %d masks in %d attempts (acceptance %.3f)",
                    n, attempts, self.report.acceptance_rate,
                    extra={'attempts': attempts, 'accepted': n})
        return accepted

    def _finish(self, attempts: int, accepted: List[np.ndarray]):
        self.report.attempts = attempts
        self.report.accepted = len(accepted)
        self.report.class_frequency = [float(f) for f in class_frequency(accepted)]


def generate_masks(mask_model, n: int, filter_cfg: PathologyFilterConfig, rng,
                   sched: NoiseSchedule, canvas: Tuple[int, int],
                   batch_size: int = 16) -> List[np.ndarray]:
    """Sample n filtered masks (see MaskGenerator.generate)."""
    return MaskGenerator(mask_model, sched, canvas, filter_cfg, batch_size).generate(n, rng)
