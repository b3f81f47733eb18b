"""
Speckle Rendering

Ultrasound-like gray images from label masks: per-class echogenicity times
unit-mean Rayleigh multiplicative noise, where the noise field is low-pass
filtered with a box of radius speckle_scale before modulation.
"""

import numpy as np
from scipy import ndimage

from utils.seeding import numpy_rng
from .classes import ClassId, NUM_CLASSES, check_mask
from .geometry import PhantomParams

# Rayleigh scale giving a unit-mean distribution: mean = sigma * sqrt(pi/2).
RAYLEIGH_UNIT_SIGMA = np.sqrt(2.0 / np.pi)


def echogenicity_table(params: PhantomParams) -> np.ndarray:
    """Lookup table ClassId -> mean intensity."""
    lut = np.zeros(NUM_CLASSES, dtype=np.float64)
    for cls in ClassId:
        lut[cls] = params.echogenicity[cls]
    return lut


def sample_speckle_scale(params: PhantomParams, index: int) -> float:
    """
    Speckle correlation radius used for sample `index`.

    Fixed at params.speckle_scale unless speckle_scale_max is set, in which
    case an integer radius is drawn uniformly from the inclusive range.
    """
    if params.speckle_scale_max is None:
        return float(params.speckle_scale)
    rng = numpy_rng(params.rng_seed, index, 2)
    lo = int(round(params.speckle_scale))
    hi = int(round(params.speckle_scale_max))
    return float(rng.integers(lo, hi + 1))


def speckle_field(shape, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-mean Rayleigh noise box-filtered with radius `scale`."""
    noise = rng.rayleigh(scale=RAYLEIGH_UNIT_SIGMA, size=shape)
    radius = int(round(scale))
    if radius > 0:
        noise = ndimage.uniform_filter(noise, size=2 * radius + 1, mode='reflect')
    return noise


def render_speckle(mask: np.ndarray, params: PhantomParams, index: int = 0) -> np.ndarray:
    """
    Render the gray image of a label mask.

    Args:
        mask: (height, width) LabelMask matching params.canvas
        params: Phantom parameters
        index: Sample index selecting the noise stream

    Returns:
        (height, width) float64 GrayImage in [0,1]
    """
    mask = check_mask(mask)
    if mask.shape != (params.height, params.width):
        raise ValueError(
            f"Mask shape {mask.shape} does not match canvas "
            f"{params.height}x{params.width} (height x width)")

    rng = numpy_rng(params.rng_seed, index, 1)
    field = speckle_field(mask.shape, sample_speckle_scale(params, index), rng)

    gain = 1.0
    if params.gain_jitter > 0:
        gain = 1.0 + numpy_rng(params.rng_seed, index, 3).uniform(
            -params.gain_jitter, params.gain_jitter)

    image = echogenicity_table(params)[mask] * field * gain
    return np.clip(image, 0.0, 1.0)
