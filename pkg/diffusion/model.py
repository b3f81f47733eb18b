"""
Denoiser Model

Epsilon-prediction network. The input is the channel concatenation
[x_t | one-hot(semantic) | context | time embedding]; null conditions are
zero channels. The body is the shared encoder-decoder.
"""

import math
from typing import Dict, Optional

import torch
from torch import nn

from utils.nets import EncoderDecoder, count_parameters
from utils.seeding import seeded_torch
from phantom.classes import NUM_CLASSES


def time_embedding(t: torch.Tensor, timesteps: int, channels: int) -> torch.Tensor:
    """
    Sinusoidal embedding of the normalized step t / T.

    Returns:
        (B, channels) tensor of sin/cos pairs at frequencies pi * 2**k
    """
    if channels == 0:
        return torch.zeros((t.shape[0], 0), dtype=torch.float64)
    s = t.to(torch.float64) / float(timesteps)
    freqs = math.pi * 2.0 ** torch.arange(channels // 2, dtype=torch.float64)
    angles = s[:, None] * freqs[None, :]
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=1)


class DenoiserModel(nn.Module):
    """
    Conditioned epsilon predictor.

    Args:
        image_channels: Channels of x_t (1 for images, 8 for one-hot mask fields)
        semantic_channels: One-hot semantic channels (0 disables the input)
        context_channels: Context image channels (0 disables the input)
        time_channels: Sinusoidal time-embedding channels (even)
        base_channels: Width of the first encoder level
        levels: Encoder-decoder depth
        timesteps: Chain length T used to normalize t
    """

    def __init__(self, image_channels: int = 1, semantic_channels: int = NUM_CLASSES,
                 context_channels: int = 1, time_channels: int = 4,
                 base_channels: int = 32, levels: int = 3, timesteps: int = 200):
        super().__init__()
        if time_channels % 2:
            raise ValueError(f"time_channels must be even, got {time_channels}")
        self.image_channels = image_channels
        self.semantic_channels = semantic_channels
        self.context_channels = context_channels
        self.time_channels = time_channels
        self.base_channels = base_channels
        self.levels = levels
        self.timesteps = timesteps

        in_channels = image_channels + semantic_channels + context_channels + time_channels
        self.net = EncoderDecoder(in_channels, image_channels, base_channels, levels)

    @property
    def config(self) -> Dict:
        return {
            'image_channels': self.image_channels,
            'semantic_channels': self.semantic_channels,
            'context_channels': self.context_channels,
            'time_channels': self.time_channels,
            'base_channels': self.base_channels,
            'levels': self.levels,
            'timesteps': self.timesteps,
        }

    @classmethod
    def from_config(cls, config: Dict, seed: Optional[int] = None) -> "DenoiserModel":
        """Construct a model; with a seed, initialization is reproducible."""
        if seed is None:
            return cls(**config)
        with seeded_torch(seed):
            return cls(**config)

    def num_parameters(self) -> int:
        return count_parameters(self)

    def forward(self, x_t: torch.Tensor, t, semantic: Optional[torch.Tensor] = None,
                context: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        Predict the noise in x_t.

        Args:
            x_t: (B, image_channels, H, W) noisy raster
            t: Step(s), int or (B,) tensor in 1..T
            semantic: (B, semantic_channels, H, W) one-hot or None for null
            context: (B, context_channels, H, W) image or None for null

        Returns:
            (B, image_channels, H, W) epsilon estimate
        """
        dtype = next(self.parameters()).dtype
        b, c, h, w = x_t.shape
        if c != self.image_channels:
            raise ValueError(f"x_t has {c} channels, model expects {self.image_channels}")

        if not isinstance(t, torch.Tensor):
            t = torch.full((b,), int(t), dtype=torch.long)
        t = t.reshape(-1).expand(b) if t.numel() == 1 else t

        parts = [x_t.to(dtype)]
        parts.append(self._condition(semantic, self.semantic_channels, b, h, w, dtype, 'semantic'))
        parts.append(self._condition(context, self.context_channels, b, h, w, dtype, 'context'))
        emb = time_embedding(t, self.timesteps, self.time_channels).to(dtype)
        parts.append(emb[:, :, None, None].expand(b, self.time_channels, h, w))

        return self.net(torch.cat(parts, dim=1))

    @staticmethod
    def _condition(value, channels, b, h, w, dtype, name) -> torch.Tensor:
        if value is None or channels == 0:
            return torch.zeros((b, channels, h, w), dtype=dtype)
        if tuple(value.shape) != (b, channels, h, w):
            raise ValueError(
                f"{name} condition shape {tuple(value.shape)} != {(b, channels, h, w)}")
        return value.to(dtype)


def build_denoiser(section: Dict, seed: int, image_channels: int = 1,
                   conditioned: bool = True) -> DenoiserModel:
    """
    Construct a denoiser from a config section ('diffusion' or 'maskgen').

    Args:
        section: Config section with base_channels, levels, timesteps, time_channels
        seed: Initialization seed
        image_channels: Channels of the diffused raster
        conditioned: False drops the semantic/context inputs (unconditional model)
    """
    config = {
        'image_channels': image_channels,
        'semantic_channels': NUM_CLASSES if conditioned else 0,
        'context_channels': 1 if conditioned else 0,
        'time_channels': int(section.get('time_channels', 4)),
        'base_channels': int(section['base_channels']),
        'levels': int(section['levels']),
        'timesteps': int(section['timesteps']),
    }
    return DenoiserModel.from_config(config, seed=seed)
