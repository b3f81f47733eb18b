"""
Ancestral Sampling

DDPM reverse chain from pure noise. Each step predicts x0 from the (guided)
epsilon, clips it to the data range and draws from the posterior
q(x_{t-1} | x_t, x0); the final step returns the posterior mean.
"""

import logging
import math
from typing import Callable, Optional, Sequence

import numpy as np
import torch

from .conditioning import ConditionPair, GuidanceConfig, encode_condition, to_unit_range
from .guidance import EpsilonModel, guided_epsilon
from .schedule import NoiseSchedule

logger = logging.getLogger(__name__)


class SamplingError(FloatingPointError):
    """The reverse chain produced non-finite values."""


def reverse_step(x_t: torch.Tensor, eps: torch.Tensor, t: int, sched: NoiseSchedule,
                 gen: torch.Generator) -> torch.Tensor:
    """One ancestral step x_t -> x_{t-1}."""
    ab = sched.alpha_bar(t)
    x0 = ((x_t - math.sqrt(1.0 - ab) * eps) / math.sqrt(ab)).clamp(-1.0, 1.0)
    post = sched.posterior(t)
    mean = post['coef_x0'] * x0 + post['coef_xt'] * x_t
    if t == 1:
        return mean
    z = torch.randn(x_t.shape, generator=gen, dtype=x_t.dtype)
    return mean + math.sqrt(post['variance']) * z


def run_chain(eps_fn: Callable[[torch.Tensor, int], torch.Tensor], shape: Sequence[int],
              sched: NoiseSchedule, gen: torch.Generator) -> torch.Tensor:
    """
    Reverse chain T..1 from N(0, I).

    Args:
        eps_fn: eps_fn(x_t, t) -> epsilon estimate
        shape: (B, C, H, W)
        sched: Noise schedule
        gen: Torch generator (the only randomness source)

    Returns:
        x_0 in the model range [-1, 1]

    Raises:
        SamplingError: an intermediate raster is non-finite
    """
    x = torch.randn(tuple(shape), generator=gen, dtype=torch.float32)
    for t in range(sched.T, 0, -1):
        eps = eps_fn(x, t).to(x.dtype)
        x = reverse_step(x, eps, t, sched, gen)
        if not torch.isfinite(x).all():
            raise SamplingError(f"Non-finite values at step t={t}")
    return x.clamp(-1.0, 1.0)


def _as_generator(rng) -> torch.Generator:
    if isinstance(rng, torch.Generator):
        return rng
    gen = torch.Generator(device='cpu')
    gen.manual_seed(int(rng))
    return gen


@torch.no_grad()
def sample(model: EpsilonModel, cond: ConditionPair, g: GuidanceConfig,
           sched: NoiseSchedule, rng) -> np.ndarray:
    """
    Generate images for a mask (and optional context) with dual guidance.

    Args:
        model: Trained denoiser (image_channels = 1)
        cond: Conditions; semantic (H, W) or (B, H, W) is required
        g: Guidance scales
        sched: Noise schedule of the model
        rng: torch.Generator or integer seed

    Returns:
        (H, W) image, or (B, H, W) for batched masks, float64 in [0, 1]
    """
    if cond.semantic is None:
        raise ValueError("Guided sampling needs a semantic condition")
    if hasattr(model, 'eval'):
        model.eval()

    semantic_np = np.asarray(cond.semantic)
    batched = semantic_np.ndim == 3
    b = semantic_np.shape[0] if batched else 1
    if cond.context is not None and np.asarray(cond.context).ndim == 3:
        b = max(b, np.asarray(cond.context).shape[0])
        batched = True
    h, w = semantic_np.shape[-2:]
    semantic, context = encode_condition(cond, b, (h, w))

    x0 = run_chain(lambda x, t: guided_epsilon(model, x, t, semantic, context, g),
                   (b, 1, h, w), sched, _as_generator(rng))
    images = to_unit_range(x0)[:, 0].to(torch.float64).numpy()
    return images if batched else images[0]


@torch.no_grad()
def sample_unconditional(model: EpsilonModel, shape: Sequence[int],
                         sched: NoiseSchedule, rng) -> np.ndarray:
    """
    Sample with the null condition only (the phi branch).

    Args:
        shape: (B, C, H, W) of the diffused raster

    Returns:
        (B, C, H, W) float64 array in [-1, 1]
    """
    if hasattr(model, 'eval'):
        model.eval()
    x0 = run_chain(lambda x, t: model(x, t, None, None), shape, sched, _as_generator(rng))
    return x0.to(torch.float64).numpy()
