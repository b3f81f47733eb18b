"""
Conditioning

ConditionPair holds the semantic mask c_S and context image c_C; None is
the null condition and is encoded as all-zero channels. Images are moved to
the model's [-1, 1] range, conditions keep their natural range.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from phantom.classes import NUM_CLASSES


@dataclass
class ConditionPair:
    """Semantic mask (H, W) or (B, H, W) and context image, either may be None."""

    semantic: Optional[np.ndarray] = None
    context: Optional[np.ndarray] = None


@dataclass(frozen=True)
class GuidanceConfig:
    """Guidance scales for the semantic and context terms."""

    s_S: float = 1.5
    s_C: float = 2.5

    def __post_init__(self):
        if not (math.isfinite(self.s_S) and math.isfinite(self.s_C)):
            raise ValueError(f"Guidance scales must be finite, got ({self.s_S}, {self.s_C})")


def to_model_range(images):
    """[0, 1] -> [-1, 1]."""
    return images * 2.0 - 1.0


def to_unit_range(x):
    """[-1, 1] -> [0, 1], clamped."""
    if isinstance(x, torch.Tensor):
        return ((x + 1.0) / 2.0).clamp(0.0, 1.0)
    return np.clip((np.asarray(x) + 1.0) / 2.0, 0.0, 1.0)


def onehot_tensor(masks) -> torch.Tensor:
    """(H, W) or (B, H, W) integer masks -> (B, 8, H, W) float one-hot."""
    m = torch.as_tensor(np.asarray(masks, dtype=np.int64))
    if m.ndim == 2:
        m = m.unsqueeze(0)
    if m.ndim != 3:
        raise ValueError(f"Expected (H, W) or (B, H, W) masks, got {tuple(m.shape)}")
    return F.one_hot(m, NUM_CLASSES).permute(0, 3, 1, 2).to(torch.float32)


def context_tensor(images) -> torch.Tensor:
    """(H, W) or (B, H, W) [0, 1] images -> (B, 1, H, W) float."""
    c = torch.as_tensor(np.asarray(images, dtype=np.float32))
    if c.ndim == 2:
        c = c.unsqueeze(0)
    if c.ndim != 3:
        raise ValueError(f"Expected (H, W) or (B, H, W) images, got {tuple(c.shape)}")
    return c.unsqueeze(1)


def encode_condition(cond: ConditionPair, batch: int,
                     canvas: Tuple[int, int]) -> Tuple[Optional[torch.Tensor], Optional[torch.Tensor]]:
    """
    Tensors for a ConditionPair, broadcast to `batch` and checked against canvas (H, W).

    Returns:
        (semantic (B, 8, H, W) or None, context (B, 1, H, W) or None)
    """
    semantic = None
    context = None
    if cond.semantic is not None:
        semantic = _broadcast(onehot_tensor(cond.semantic), batch, canvas, 'semantic')
    if cond.context is not None:
        context = _broadcast(context_tensor(cond.context), batch, canvas, 'context')
    return semantic, context


def _broadcast(t: torch.Tensor, batch: int, canvas: Tuple[int, int], name: str) -> torch.Tensor:
    if tuple(t.shape[-2:]) != tuple(canvas):
        raise ValueError(f"{name} shape {tuple(t.shape[-2:])} does not match canvas {tuple(canvas)}")
    if t.shape[0] == batch:
        return t
    if t.shape[0] == 1:
        return t.expand(batch, *t.shape[1:])
    raise ValueError(f"{name} batch {t.shape[0]} does not match {batch}")


def collate(batch: Sequence[Tuple[np.ndarray, ConditionPair]]):
    """
    Stack (x0, ConditionPair) examples into model tensors.

    A missing condition becomes zeros and is reported in the keep flags.

    Returns:
        (x0 in [-1, 1] (B, 1, H, W), semantic (B, 8, H, W), context (B, 1, H, W),
         has_semantic (B,), has_context (B,))
    """
    if not batch:
        raise ValueError("Batch is empty")
    x0 = to_model_range(context_tensor(np.stack([np.asarray(x) for x, _ in batch])))
    _, _, h, w = x0.shape

    semantic = torch.zeros((len(batch), NUM_CLASSES, h, w))
    context = torch.zeros((len(batch), 1, h, w))
    has_semantic = torch.zeros(len(batch), dtype=torch.bool)
    has_context = torch.zeros(len(batch), dtype=torch.bool)
    for i, (_, cond) in enumerate(batch):
        s, c = encode_condition(cond, 1, (h, w))
        if s is not None:
            semantic[i] = s[0]
            has_semantic[i] = True
        if c is not None:
            context[i] = c[0]
            has_context[i] = True
    return x0, semantic, context, has_semantic, has_context


def sample_dropout(n: int, gen: torch.Generator, p_context: float = 0.05,
                   p_both: float = 0.05) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Per-example condition dropout.

    One uniform draw per example: below p_both drops both conditions, the
    next p_context of mass drops the context only.

    Returns:
        (drop_semantic, drop_context) boolean tensors of length n
    """
    if p_context < 0 or p_both < 0 or p_context + p_both > 1:
        raise ValueError(f"Invalid dropout probabilities ({p_context}, {p_both})")
    u = torch.rand(n, generator=gen, dtype=torch.float64)
    drop_both = u < p_both
    drop_context_only = (u >= p_both) & (u < p_both + p_context)
    return drop_both, drop_both | drop_context_only
