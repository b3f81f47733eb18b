"""
Distribution Distances

Kolmogorov-Smirnov statistic, histogram KL divergence and the Frechet
distance between Gaussians fitted to two embedding sets. The per-dimension
helpers average KS and KL over embedding marginals.
"""

import logging

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

KL_EPSILON = 1e-9
NEGATIVE_EIGEN_LIMIT = -1e-6


class CovarianceError(ValueError):
    """Covariance estimate too unstable for a Frechet distance."""


def _samples(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def ks_statistic(a, b) -> float:
    """Largest gap between the two empirical CDFs."""
    a = _samples(a, 'a')
    b = _samples(b, 'b')
    return float(stats.ks_2samp(a, b, method='asymp').statistic)


def kl_from_histograms(p_hist, q_hist, eps: float = KL_EPSILON) -> float:
    """
    KL(p || q) of two histograms after adding eps mass per bin and renormalizing.
    """
    p = np.asarray(p_hist, dtype=np.float64)
    q = np.asarray(q_hist, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"Histogram shapes differ: {p.shape} vs {q.shape}")
    if p.sum() <= 0 or q.sum() <= 0:
        raise ValueError("Histograms must have positive mass")
    p = p / p.sum() + eps
    q = q / q.sum() + eps
    return float(stats.entropy(p, q))


def kl_divergence(p_samples, q_samples, bins: int = 32) -> float:
    """KL divergence of two sample sets histogrammed on their joint range."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    p = _samples(p_samples, 'p_samples')
    q = _samples(q_samples, 'q_samples')
    lo = min(p.min(), q.min())
    hi = max(p.max(), q.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    p_hist, _ = np.histogram(p, bins=edges)
    q_hist, _ = np.histogram(q, bins=edges)
    return kl_from_histograms(p_hist, q_hist)


def _check_embeddings(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty (n, d) array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def marginal_ks(real, synth) -> float:
    """KS statistic averaged over embedding dimensions."""
    real = _check_embeddings(real, 'real')
    synth = _check_embeddings(synth, 'synth')
    return float(np.mean([ks_statistic(real[:, j], synth[:, j]) for j in range(real.shape[1])]))


def marginal_kl(real, synth, bins: int = 32) -> float:
    """KL(real || synth) averaged over embedding dimensions."""
    real = _check_embeddings(real, 'real')
    synth = _check_embeddings(synth, 'synth')
    return float(np.mean([kl_divergence(real[:, j], synth[:, j], bins)
                          for j in range(real.shape[1])]))


def _psd_sqrt(m: np.ndarray, what: str) -> np.ndarray:
    m = (m + m.T) / 2.0
    w, v = np.linalg.eigh(m)
    if w.min() < NEGATIVE_EIGEN_LIMIT:
        raise CovarianceError(f"{what} has eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def frechet_from_moments(mu1, sigma1, mu2, sigma2) -> float:
    """
    Squared Frechet distance between N(mu1, sigma1) and N(mu2, sigma2).

    The cross term uses the symmetric form sqrt(S1^1/2 S2 S1^1/2).
    """
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=np.float64))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=np.float64))
    s1 = np.atleast_2d(np.asarray(sigma1, dtype=np.float64))
    s2 = np.atleast_2d(np.asarray(sigma2, dtype=np.float64))
    if mu1.shape != mu2.shape or s1.shape != s2.shape or s1.shape != (mu1.size, mu1.size):
        raise ValueError("Moment shapes are inconsistent")

    root1 = _psd_sqrt(s1, 'first covariance')
    cross = _psd_sqrt(root1 @ s2 @ root1, 'covariance product')
    diff = mu1 - mu2
    d2 = float(diff @ diff + np.trace(s1) + np.trace(s2) - 2.0 * np.trace(cross))
    return max(d2, 0.0)


def frechet_distance(real, synth, min_samples_ratio: float = 0.25) -> float:
    """
    Squared Frechet distance between Gaussian fits of two embedding sets.

    Raises:
        CovarianceError: a set has no more than d * min_samples_ratio samples
    """
    real = _check_embeddings(real, 'real')
    synth = _check_embeddings(synth, 'synth')
    if real.shape[1] != synth.shape[1]:
        raise ValueError(f"Embedding dims differ: {real.shape[1]} vs {synth.shape[1]}")
    d = real.shape[1]
    for name, x in (('real', real), ('synth', synth)):
        if x.shape[0] < 2 or x.shape[0] <= d * min_samples_ratio:
            raise CovarianceError(
                f"{name} set has {x.shape[0]} samples; need more than {d * min_samples_ratio:g} "
                f"for {d}-dimensional embeddings")
    return frechet_from_moments(real.mean(axis=0), np.cov(real, rowvar=False),
                                synth.mean(axis=0), np.cov(synth, rowvar=False))
