"""
Fixed Convolution Stack

A small random-feature CNN used as the texture encoder. Each layer is a
bias-free 3x3 convolution (circular padding), a rectifier and a 2x2 average
pool. Weights are drawn once from a seeded N(0,1) generator and never change.
"""

from typing import Dict, List, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from utils.seeding import torch_generator

DEFAULT_CHANNELS = (8, 16, 32)


class ConvStack:
    """
    Frozen random conv stack (1 -> channels[0] -> ... -> channels[-1]).
    """

    def __init__(self, seed: int = 0, channels: Sequence[int] = DEFAULT_CHANNELS):
        if not channels:
            raise ValueError("ConvStack needs at least one layer")
        self.seed = int(seed)
        self.channels = tuple(int(c) for c in channels)

        gen = torch_generator(self.seed)
        weights = []
        c_in = 1
        for c_out in self.channels:
            w = torch.randn((c_out, c_in, 3, 3), generator=gen, dtype=torch.float64)
            w.requires_grad_(False)
            weights.append(w)
            c_in = c_out
        self._weights: Tuple[torch.Tensor, ...] = tuple(weights)

    @property
    def num_layers(self) -> int:
        return len(self.channels)

    @property
    def weights(self) -> Tuple[np.ndarray, ...]:
        """Read-only copies of the layer kernels."""
        return tuple(w.numpy().copy() for w in self._weights)

    def min_size(self, layer_ids: Sequence[int]) -> int:
        """Smallest image side for which every selected layer has >= 3x3 activations."""
        deepest = max(layer_ids)
        return 3 * 2 ** deepest

    def check_layers(self, layer_ids: Sequence[int]) -> List[int]:
        layer_ids = sorted(set(int(i) for i in layer_ids))
        if not layer_ids:
            raise ValueError("No layers selected")
        for i in layer_ids:
            if not 0 <= i < self.num_layers:
                raise ValueError(f"Layer {i} outside stack of {self.num_layers} layers")
        return layer_ids

    @torch.no_grad()
    def activations(self, images: torch.Tensor, layer_ids: Sequence[int]) -> Dict[int, torch.Tensor]:
        """
        Rectified activations of the selected layers (before pooling).

        Args:
            images: (batch, 1, height, width) tensor
            layer_ids: Layer indices to return

        Returns:
            Dict layer index -> (batch, channels, h_l, w_l) float64 tensor
        """
        layer_ids = self.check_layers(layer_ids)
        if images.ndim != 4 or images.shape[1] != 1:
            raise ValueError(f"Expected (batch, 1, H, W) input, got {tuple(images.shape)}")
        side = min(images.shape[-2:])
        needed = self.min_size(layer_ids)
        if side < needed:
            raise ValueError(
                f"Image side {side}px too small for layer {max(layer_ids)} "
                f"(needs >= {needed}px)")

        h = images.to(torch.float64)
        out = {}
        for i, w in enumerate(self._weights):
            h = F.relu(F.conv2d(F.pad(h, (1, 1, 1, 1), mode='circular'), w))
            if i in layer_ids:
                out[i] = h
            if i == layer_ids[-1]:
                break
            h = F.avg_pool2d(h, 2)
        return out

    def descriptor_length(self, layer_ids: Sequence[int]) -> int:
        """Length of the flattened upper-triangle Gram descriptor."""
        return sum(self.channels[i] * (self.channels[i] + 1) // 2
                   for i in self.check_layers(layer_ids))

    @classmethod
    def from_config(cls, section: Dict) -> "ConvStack":
        return cls(seed=int(section.get('stack_seed', 0)),
                   channels=section.get('channels', DEFAULT_CHANNELS))
