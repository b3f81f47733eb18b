"""
Dual Classifier-Free Guidance

eps = phi + s_S * (e(x, c_S, 0) - phi) + s_C * (e(x, c_S, c_C) - e(x, c_S, 0)),
with phi = e(x, 0, 0). Each branch is a separate model call.
"""

from typing import Callable, Optional

import torch

from .conditioning import ConditionPair, GuidanceConfig, encode_condition

# model(x_t, t, semantic, context) -> eps
EpsilonModel = Callable[..., torch.Tensor]


def guided_epsilon(model: EpsilonModel, x_t: torch.Tensor, t,
                   semantic: torch.Tensor, context: Optional[torch.Tensor],
                   g: GuidanceConfig) -> torch.Tensor:
    """Guidance on pre-encoded condition tensors."""
    phi = model(x_t, t, None, None)
    e_s = model(x_t, t, semantic, None)
    guided = phi + g.s_S * (e_s - phi)
    if context is None:
        return guided
    e_sc = model(x_t, t, semantic, context)
    return guided + g.s_C * (e_sc - e_s)


@torch.no_grad()
def cfg_epsilon(model: EpsilonModel, x_t: torch.Tensor, t, cond: ConditionPair,
                g: GuidanceConfig) -> torch.Tensor:
    """
    Guided noise estimate.

    Args:
        model: Epsilon model called as model(x_t, t, semantic, context)
        x_t: (B, C, H, W) noisy raster
        t: Step in 1..T
        cond: Conditions; semantic is required
        g: Guidance scales

    Returns:
        Guided epsilon of x_t's shape

    Raises:
        ValueError: semantic condition missing or shapes mismatched
    """
    if cond.semantic is None:
        raise ValueError("Guided sampling needs a semantic condition")
    if x_t.ndim != 4:
        raise ValueError(f"x_t must be (B, C, H, W), got {tuple(x_t.shape)}")
    semantic, context = encode_condition(cond, x_t.shape[0], tuple(x_t.shape[-2:]))
    return guided_epsilon(model, x_t, t, semantic, context, g)
