"""
Noise Schedule

Linear beta schedule and the closed-form forward process
x_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps. Step indices are 1-based:
t = 1 is the least noisy step and t = T the noisiest.
"""

import math
from typing import Dict

import numpy as np

# Reference linear endpoints, defined for a 1000-step chain.
BETA_START = 1e-4
BETA_END = 0.02
REFERENCE_STEPS = 1000
MAX_BETA = 0.999


class NoiseSchedule:
    """Betas, alphas and cumulative products for a T-step chain."""

    def __init__(self, betas):
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ValueError("betas must be a non-empty 1-D sequence")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("every beta must lie in (0, 1)")
        self.betas = betas
        self.alphas = 1.0 - betas
        self.alphas_bar = np.cumprod(self.alphas)
        # abar_0 = 1 so the last reverse step lands on the posterior mean.
        self.alphas_bar_prev = np.concatenate([[1.0], self.alphas_bar[:-1]])

    @property
    def T(self) -> int:
        return int(self.betas.size)

    @classmethod
    def linear(cls, T: int = 200, beta_start: float = BETA_START,
               beta_end: float = BETA_END) -> "NoiseSchedule":
        """
        Linear schedule with endpoints rescaled by REFERENCE_STEPS / T.

        Rescaling keeps the total noise of the chain comparable for any T,
        so abar_T stays near zero for short chains.
        """
        if T < 1:
            raise ValueError(f"T must be >= 1, got {T}")
        scale = REFERENCE_STEPS / T
        betas = np.linspace(beta_start * scale, beta_end * scale, T)
        return cls(np.clip(betas, 1e-8, MAX_BETA))

    def check_step(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise ValueError(f"Step t={t} outside 1..{self.T}")
        return t

    def alpha_bar(self, t: int) -> float:
        return float(self.alphas_bar[self.check_step(t) - 1])

    def posterior(self, t: int) -> Dict[str, float]:
        """
        Coefficients of q(x_{t-1} | x_t, x0).

        Returns:
            Dict with 'coef_x0', 'coef_xt' and 'variance'
        """
        i = self.check_step(t) - 1
        beta = self.betas[i]
        ab = self.alphas_bar[i]
        ab_prev = self.alphas_bar_prev[i]
        return {
            'coef_x0': float(beta * math.sqrt(ab_prev) / (1.0 - ab)),
            'coef_xt': float((1.0 - ab_prev) * math.sqrt(self.alphas[i]) / (1.0 - ab)),
            'variance': float(beta * (1.0 - ab_prev) / (1.0 - ab)),
        }

    def to_dict(self) -> Dict:
        return {'T': self.T, 'betas': [float(b) for b in self.betas]}

    @classmethod
    def from_dict(cls, data: Dict) -> "NoiseSchedule":
        return cls(data['betas'])


def q_sample(x0, alpha_bar, eps):
    """
    Closed-form forward noising for a given abar (scalar or broadcastable array).

    Works on numpy arrays and torch tensors alike.
    """
    if isinstance(alpha_bar, (float, int)):
        return math.sqrt(alpha_bar) * x0 + math.sqrt(1.0 - alpha_bar) * eps
    return alpha_bar ** 0.5 * x0 + (1.0 - alpha_bar) ** 0.5 * eps


def forward_noising(x0, t: int, eps, sched: NoiseSchedule):
    """
    Noise x0 to step t.

    Args:
        x0: Clean raster (data range)
        t: Step in 1..T
        eps: Standard normal raster of x0's shape
        sched: Noise schedule

    Returns:
        x_t of the same shape

    Raises:
        ValueError: t out of range or shape mismatch
    """
    if np.shape(x0) != np.shape(eps):
        raise ValueError(f"x0 shape {np.shape(x0)} differs from eps shape {np.shape(eps)}")
    return q_sample(x0, sched.alpha_bar(t), eps)
