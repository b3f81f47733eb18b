"""
Style Descriptors

Gram-matrix texture features: G_ij = sum_k F_ik F_jk / (N * M) for each
selected layer (N channels, M spatial positions), flattened upper triangles
concatenated in layer order.
"""

from typing import Dict, Sequence

import numpy as np
import torch

from phantom.classes import check_image
from .conv_stack import ConvStack

DEFAULT_LAYERS = (0, 1, 2)


def _as_batch(images) -> torch.Tensor:
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"Expected (H, W) or (batch, H, W) images, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("Images contain non-finite values")
    return torch.from_numpy(arr).unsqueeze(1)


def batch_gram_matrices(images, stack: ConvStack,
                        layer_ids: Sequence[int] = DEFAULT_LAYERS) -> Dict[int, np.ndarray]:
    """
    Normalized Gram matrices for a batch of images.

    Images are not clamped, so scaled or signed inputs are accepted.

    Returns:
        Dict layer index -> (batch, N, N) float64 array
    """
    acts = stack.activations(_as_batch(images), layer_ids)
    grams = {}
    for layer, a in acts.items():
        b, n, h, w = a.shape
        f = a.reshape(b, n, h * w)
        grams[layer] = (torch.bmm(f, f.transpose(1, 2)) / (n * h * w)).numpy()
    return grams


def gram_matrices(img: np.ndarray, stack: ConvStack,
                  layer_ids: Sequence[int] = DEFAULT_LAYERS) -> Dict[int, np.ndarray]:
    """Per-layer (N, N) Gram matrices of a single image."""
    return {layer: g[0] for layer, g in batch_gram_matrices(img, stack, layer_ids).items()}


def flatten_grams(grams: Dict[int, np.ndarray]) -> np.ndarray:
    """Concatenate upper triangles (including diagonal) in layer order."""
    parts = []
    for layer in sorted(grams):
        g = grams[layer]
        rows, cols = np.triu_indices(g.shape[-1])
        parts.append(g[..., rows, cols])
    return np.concatenate(parts, axis=-1)


def extract_descriptor(img: np.ndarray, stack: ConvStack,
                       layer_ids: Sequence[int] = DEFAULT_LAYERS) -> np.ndarray:
    """
    Style descriptor of one GrayImage.

    Args:
        img: (H, W) image in [0,1]
        stack: Frozen conv stack
        layer_ids: Layers contributing Gram features

    Returns:
        1-D float64 descriptor of length stack.descriptor_length(layer_ids)

    Raises:
        ValueError: image invalid or too small for the deepest layer
    """
    img = check_image(img, min_size=1)
    return flatten_grams(gram_matrices(img, stack, layer_ids))


def extract_descriptors(images, stack: ConvStack,
                        layer_ids: Sequence[int] = DEFAULT_LAYERS,
                        batch_size: int = 32) -> np.ndarray:
    """Descriptors for a sequence of equally-sized images, shape (n, length)."""
    images = list(images)
    out = []
    for start in range(0, len(images), batch_size):
        chunk = np.stack([check_image(im, min_size=1) for im in images[start:start + batch_size]])
        out.append(flatten_grams(batch_gram_matrices(chunk, stack, layer_ids)))
    if not out:
        return np.zeros((0, stack.descriptor_length(layer_ids)))
    return np.concatenate(out, axis=0)


def descriptor_mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared difference between two descriptors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"Descriptor shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))
