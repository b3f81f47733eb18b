"""
Segmentation Model

GrayImage -> per-pixel scores over the 8 classes, built on the shared
encoder-decoder.
"""

from typing import Dict

import numpy as np
import torch

from phantom.classes import NUM_CLASSES
from utils.nets import EncoderDecoder
from utils.seeding import seeded_torch


class SegModel(EncoderDecoder):
    """Encoder-decoder with one input channel and NUM_CLASSES outputs."""

    def __init__(self, base_channels: int = 16, levels: int = 4):
        super().__init__(1, NUM_CLASSES, base_channels, levels)
        self.base_channels = base_channels

    @classmethod
    def from_config(cls, section: Dict, seed: int) -> "SegModel":
        with seeded_torch(seed):
            return cls(int(section.get('base_channels', 16)), int(section.get('levels', 4)))

    @torch.no_grad()
    def predict(self, images: np.ndarray, batch_size: int = 16) -> np.ndarray:
        """(B, H, W) images in [0, 1] -> (B, H, W) uint8 label masks."""
        self.eval()
        images = np.asarray(images, dtype=np.float32)
        out = []
        for start in range(0, images.shape[0], batch_size):
            x = torch.from_numpy(images[start:start + batch_size]).unsqueeze(1)
            out.append(self(x).argmax(dim=1).to(torch.uint8).numpy())
        if not out:
            return np.zeros((0,) + images.shape[1:], dtype=np.uint8)
        return np.concatenate(out, axis=0)
