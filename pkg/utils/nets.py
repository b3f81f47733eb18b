"""
Convolutional Encoder-Decoder

Small U-shaped network shared by the denoiser and the segmenter.
Encoder blocks halve resolution with 2x2 average pooling, decoder blocks
upsample (nearest) and concatenate the matching skip connection.
"""

from typing import List

import torch
from torch import nn
import torch.nn.functional as F


def _block(in_channels: int, out_channels: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1),
        nn.SiLU(),
        nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1),
        nn.SiLU(),
    )


class EncoderDecoder(nn.Module):
    """
    U-shaped conv net with `levels` resolutions.

    Channel width doubles per level up to 4x the base width. Input height
    and width must be divisible by 2**(levels - 1).
    """

    def __init__(self, in_channels: int, out_channels: int,
                 base_channels: int = 32, levels: int = 3):
        super().__init__()
        if levels < 1:
            raise ValueError(f"levels must be >= 1, got {levels}")
        if base_channels < 1:
            raise ValueError(f"base_channels must be >= 1, got {base_channels}")

        self.levels = levels
        widths = [base_channels * 2 ** min(i, 2) for i in range(levels)]
        self.widths = widths

        self.encoders = nn.ModuleList()
        prev = in_channels
        for width in widths:
            self.encoders.append(_block(prev, width))
            prev = width

        self.decoders = nn.ModuleList()
        for i in reversed(range(levels - 1)):
            self.decoders.append(_block(widths[i + 1] + widths[i], widths[i]))

        self.head = nn.Conv2d(widths[0], out_channels, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        factor = 2 ** (self.levels - 1)
        if x.shape[-2] % factor or x.shape[-1] % factor:
            raise ValueError(
                f"Input {tuple(x.shape[-2:])} not divisible by {factor} "
                f"for a {self.levels}-level network")

        skips: List[torch.Tensor] = []
        h = x
        for i, encoder in enumerate(self.encoders):
            h = encoder(h)
            if i < self.levels - 1:
                skips.append(h)
                h = F.avg_pool2d(h, 2)

        for decoder in self.decoders:
            skip = skips.pop()
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = decoder(torch.cat([h, skip], dim=1))

        return self.head(h)


def count_parameters(module: nn.Module) -> int:
    """Number of trainable scalars in a module."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
