"""
Image Embeddings

Fixed-length features from the frozen style stack: for every layer, the
Gram diagonal (mean squared activation per channel) followed by the mean
activation per channel.
"""

from typing import Sequence

import numpy as np
import torch

from phantom.classes import check_image
from style.conv_stack import ConvStack


def embedding_dim(stack: ConvStack) -> int:
    return 2 * sum(stack.channels)


def embed_images(images: Sequence[np.ndarray], stack: ConvStack,
                 batch_size: int = 32) -> np.ndarray:
    """
    Embed equally-sized GrayImages.

    Returns:
        (n, 2 * sum(channels)) float64 array
    """
    images = list(images)
    layers = list(range(stack.num_layers))
    rows = []
    for start in range(0, len(images), batch_size):
        chunk = np.stack([check_image(im, min_size=1) for im in images[start:start + batch_size]])
        acts = stack.activations(torch.from_numpy(chunk).unsqueeze(1), layers)
        parts = []
        for layer in layers:
            a = acts[layer]
            parts.append((a ** 2).mean(dim=(2, 3)))
            parts.append(a.mean(dim=(2, 3)))
        rows.append(torch.cat(parts, dim=1).numpy())
    if not rows:
        return np.zeros((0, embedding_dim(stack)))
    return np.concatenate(rows, axis=0)
