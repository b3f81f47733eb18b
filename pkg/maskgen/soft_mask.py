"""
Soft Masks

One-hot relaxation of label masks so label fields can be diffused, the
argmax quantization back to labels, and 3x3 majority smoothing.
"""

import numpy as np
from scipy import ndimage

from phantom.classes import NUM_CLASSES, check_mask


def encode_onehot(mask: np.ndarray) -> np.ndarray:
    """(H, W) LabelMask -> (8, H, W) float64 one-hot SoftMask."""
    mask = check_mask(mask, min_size=1)
    return (np.arange(NUM_CLASSES)[:, None, None] == mask[None]).astype(np.float64)


def check_soft(soft: np.ndarray) -> np.ndarray:
    soft = np.asarray(soft, dtype=np.float64)
    if soft.ndim != 3 or soft.shape[0] != NUM_CLASSES:
        raise ValueError(f"SoftMask must be ({NUM_CLASSES}, H, W), got {soft.shape}")
    if not np.all(np.isfinite(soft)):
        raise ValueError("SoftMask contains non-finite scores")
    return soft


def quantize_mask(soft: np.ndarray) -> np.ndarray:
    """Per-pixel argmax over class scores; ties resolve to the lowest ClassId."""
    return np.argmax(check_soft(soft), axis=0).astype(np.uint8)


def majority_smooth(mask: np.ndarray) -> np.ndarray:
    """
    3x3 majority vote.

    Each pixel takes the most frequent label among its in-canvas 3x3
    neighbourhood. The centre label wins ties; remaining ties go to the
    lowest ClassId.
    """
    mask = check_mask(mask, min_size=1)
    kernel = np.ones((3, 3), dtype=np.int64)
    votes = np.empty((NUM_CLASSES,) + mask.shape, dtype=np.float64)
    for cls in range(NUM_CLASSES):
        votes[cls] = ndimage.convolve((mask == cls).astype(np.int64), kernel,
                                      mode='constant', cval=0)
    votes += 0.5 * encode_onehot(mask)
    return np.argmax(votes, axis=0).astype(np.uint8)
