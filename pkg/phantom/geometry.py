"""
Phantom Geometry

Layered musculoskeletal label masks: a background strip, a muscle band, a
tendon band and (usually) a bone ridge, separated by smooth undulating
boundaries. Findings (DITF, calcification, anisotropy) are drawn inside the
tendon band; bone irregularities replace part of the ridge.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from utils.seeding import numpy_rng
from .classes import ClassId, DEFAULT_ECHOGENICITY, check_mask

MIN_CANVAS = 16

# Band thicknesses as fractions of canvas height (calibrated to the reference
# area statistics: muscle 27%, tendon 10%, bone 2.7% when present).
TOP_FRACTION = 0.06
MUSCLE_FRACTION = 0.27
TENDON_FRACTION = 0.115
BONE_FRACTION = 0.035


@dataclass
class PhantomParams:
    """Parameters of the procedural phantom generator."""

    rng_seed: int = 0
    canvas: Tuple[int, int] = (64, 64)  # (width, height)
    layer_count: int = 1
    echogenicity: Dict[ClassId, float] = field(
        default_factory=lambda: dict(DEFAULT_ECHOGENICITY))
    speckle_scale: float = 1.0
    pathology_rate: float = 0.5
    bone_rate: float = 0.75
    calcification_rate: float = 0.1
    bone_irregularity_rate: float = 0.3
    anisotropy_rate: float = 0.3
    speckle_scale_max: Optional[float] = None
    gain_jitter: float = 0.0

    @property
    def width(self) -> int:
        return int(self.canvas[0])

    @property
    def height(self) -> int:
        return int(self.canvas[1])

    def validate(self):
        """
        Check parameter invariants.

        Raises:
            ValueError: describing the first violated invariant
        """
        if len(self.canvas) != 2:
            raise ValueError(f"canvas must be (width, height), got {self.canvas}")
        if self.width < MIN_CANVAS or self.height < MIN_CANVAS:
            raise ValueError(
                f"Canvas {self.width}x{self.height} too small (minimum {MIN_CANVAS}px)")
        if self.layer_count < 1:
            raise ValueError("layer_count must be >= 1")
        missing = [c.label for c in ClassId if c not in self.echogenicity]
        if missing:
            raise ValueError(f"echogenicity missing classes: {missing}")
        if self.echogenicity[ClassId.BACKGROUND] != 0.0:
            raise ValueError("echogenicity[background] must be 0")
        for cls, value in self.echogenicity.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"echogenicity[{ClassId(cls).label}]={value} outside [0,1]")
        for name in ('pathology_rate', 'bone_rate', 'calcification_rate',
                     'bone_irregularity_rate', 'anisotropy_rate'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0,1]")
        if self.speckle_scale < 0:
            raise ValueError("speckle_scale must be >= 0")
        if self.speckle_scale_max is not None and self.speckle_scale_max < self.speckle_scale:
            raise ValueError("speckle_scale_max must be >= speckle_scale")
        if not 0.0 <= self.gain_jitter < 1.0:
            raise ValueError("gain_jitter must be in [0,1)")

    @classmethod
    def from_config(cls, section: Dict, seed: int) -> "PhantomParams":
        """
        Build params from the 'phantom' config section.

        Args:
            section: Config section dict (echogenicity keyed by class name)
            seed: Stage seed

        Returns:
            Validated PhantomParams
        """
        echo = dict(DEFAULT_ECHOGENICITY)
        for name, value in section.get('echogenicity', {}).items():
            try:
                echo[ClassId.from_name(name)] = float(value)
            except KeyError as e:
                raise ValueError(f"Unknown class in echogenicity: {name}") from e

        params = cls(
            rng_seed=int(seed),
            canvas=tuple(int(v) for v in section.get('canvas', (64, 64))),
            layer_count=int(section.get('layer_count', 1)),
            echogenicity=echo,
            speckle_scale=float(section.get('speckle_scale', 1.0)),
            pathology_rate=float(section.get('pathology_rate', 0.5)),
            bone_rate=float(section.get('bone_rate', 0.75)),
            calcification_rate=float(section.get('calcification_rate', 0.1)),
            bone_irregularity_rate=float(section.get('bone_irregularity_rate', 0.3)),
            anisotropy_rate=float(section.get('anisotropy_rate', 0.3)),
            speckle_scale_max=(None if section.get('speckle_scale_max') is None
                               else float(section['speckle_scale_max'])),
            gain_jitter=float(section.get('gain_jitter', 0.0)),
        )
        params.validate()
        return params


def _wave(rng: np.random.Generator, x: np.ndarray, width: int, amplitude: float) -> np.ndarray:
    freq = rng.uniform(0.5, 1.5)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    return amplitude * np.sin(2.0 * np.pi * freq * x / width + phase)


def sample_mask_geometry(params: PhantomParams, index: int) -> np.ndarray:
    """
    Generate the label mask of phantom `index`.

    Args:
        params: Phantom parameters
        index: Sample index (with params.rng_seed, fully determines the mask)

    Returns:
        (height, width) uint8 LabelMask
    """
    params.validate()
    W, H = params.width, params.height
    rng = numpy_rng(params.rng_seed, index, 0)

    x = np.arange(W, dtype=np.float64)
    yy = np.arange(H, dtype=np.float64)[:, None]

    shared = _wave(rng, x, W, 0.03 * H)
    top = np.maximum(0.0, TOP_FRACTION * H * rng.uniform(0.8, 1.2) + shared
                     + _wave(rng, x, W, 0.01 * H))
    muscle_thick = MUSCLE_FRACTION * H * rng.uniform(0.85, 1.15)
    tendon_thick = TENDON_FRACTION * H * rng.uniform(0.85, 1.15)
    b1 = top + muscle_thick + _wave(rng, x, W, 0.02 * H)
    b2 = b1 + tendon_thick + _wave(rng, x, W, 0.01 * H)
    bone_thick = BONE_FRACTION * H

    mask = np.zeros((H, W), dtype=np.uint8)
    muscle = (yy >= top) & (yy < b1)
    tendon = (yy >= b1) & (yy < b2)
    mask[muscle] = ClassId.MUSCLE
    mask[tendon] = ClassId.TENDON

    # Thin background septa split the muscle into layer_count bellies.
    for k in range(1, params.layer_count):
        septum = np.rint(top + k * (b1 - top) / params.layer_count).astype(int)
        cols = np.nonzero((septum >= 0) & (septum < H))[0]
        mask[septum[cols], cols] = ClassId.BACKGROUND

    if rng.random() < params.bone_rate:
        bone = (yy >= b2) & (yy < b2 + bone_thick)
        mask[bone] = ClassId.BONE

        if rng.random() < params.bone_irregularity_rate:
            start = rng.uniform(0.0, 0.8) * W
            length = rng.uniform(0.15, 0.3) * W
            extra = rng.integers(1, 3, size=W)
            segment = (x >= start) & (x < start + length)
            irregular = (yy >= b2) & (yy < b2 + bone_thick + extra) & segment
            mask[irregular] = ClassId.BONE_IRREGULARITY

    # Band-relative vertical coordinate: -1 at the tendon's top edge, +1 at its bottom.
    mid = (b1 + b2 - 1.0) / 2.0
    half = np.maximum((b2 - b1) / 2.0, 0.5)
    v = (yy - mid) / half

    if rng.random() < params.anisotropy_rate:
        cx = rng.uniform(0.15, 0.85) * W
        a = rng.uniform(0.08, 0.14) * W
        region = (((x - cx) / a) ** 2 + (v / 0.95) ** 2 <= 1.0) & tendon
        mask[region] = ClassId.ANISOTROPY

    if rng.random() < params.pathology_rate:
        cx = rng.uniform(0.2, 0.8) * W
        a = rng.uniform(0.14, 0.2) * W
        r_v = rng.uniform(0.55, 0.8)
        lesion = (((x - cx) / a) ** 2 + (v / r_v) ** 2 <= 1.0) & tendon
        mask[lesion] = ClassId.DITF

    if rng.random() < params.calcification_rate:
        cx = rng.uniform(0.1, 0.9) * W
        cv = rng.uniform(-0.5, 0.5)
        radius = rng.uniform(0.8, 1.6)
        cy = mid + cv * half
        blob = (((x - cx) ** 2 + (yy - cy) ** 2) <= radius ** 2) & (mask == ClassId.TENDON)
        mask[blob] = ClassId.CALCIFICATION

    return check_mask(mask, min_size=MIN_CANVAS)
