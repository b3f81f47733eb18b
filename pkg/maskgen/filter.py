"""
Pathology Filter

Accept generated masks only when they carry enough DITF area (and any
required classes), and measure how far the accepted set drifts from the
training masks in class frequency.
"""

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Sequence

import numpy as np

from phantom.classes import ClassId, NUM_CLASSES, class_fractions, check_mask

DEFAULT_MAX_CLASS_TV = 0.25


@dataclass(frozen=True)
class PathologyFilterConfig:
    """Filter predicate parameters."""

    min_ditf_fraction: float = 0.005
    require_classes: FrozenSet[ClassId] = field(default_factory=frozenset)

    def __post_init__(self):
        if not 0.0 <= self.min_ditf_fraction <= 1.0:
            raise ValueError(f"min_ditf_fraction={self.min_ditf_fraction} outside [0,1]")
        object.__setattr__(self, 'require_classes',
                           frozenset(ClassId(c) for c in self.require_classes))

    @classmethod
    def from_config(cls, section: Dict) -> "PathologyFilterConfig":
        required = []
        for c in section.get('require_classes', []):
            required.append(ClassId.from_name(c) if isinstance(c, str) else ClassId(int(c)))
        return cls(float(section.get('min_ditf_fraction', 0.005)), frozenset(required))

    def to_dict(self) -> Dict:
        return {
            'min_ditf_fraction': self.min_ditf_fraction,
            'require_classes': sorted(c.label for c in self.require_classes),
        }


def passes_filter(mask: np.ndarray, cfg: PathologyFilterConfig) -> bool:
    """True when the mask has enough DITF area and every required class."""
    mask = check_mask(mask, min_size=1)
    fractions = class_fractions(mask)
    if fractions[ClassId.DITF] < cfg.min_ditf_fraction:
        return False
    return all(fractions[c] > 0 for c in cfg.require_classes)


def class_frequency(masks: Iterable[np.ndarray]) -> np.ndarray:
    """Mean per-class area fraction over a set of masks."""
    rows = [class_fractions(m) for m in masks]
    if not rows:
        return np.zeros(NUM_CLASSES)
    return np.mean(rows, axis=0)


def total_variation(p: Sequence[float], q: Sequence[float]) -> float:
    """Total-variation distance between two class-frequency vectors."""
    return 0.5 * float(np.abs(np.asarray(p, dtype=np.float64) - np.asarray(q, dtype=np.float64)).sum())


def frequency_fidelity(generated: Iterable[np.ndarray], reference: Iterable[np.ndarray],
                       max_tv: float = DEFAULT_MAX_CLASS_TV) -> Dict:
    """
    Class-frequency distance of generated masks from the masks the model was trained on.

    Returns:
        Dict with class_tv, max_class_tv and within_class_tv
    """
    if not 0.0 <= max_tv <= 1.0:
        raise ValueError(f"max_tv={max_tv} outside [0,1]")
    tv = total_variation(class_frequency(generated), class_frequency(reference))
    return {'class_tv': tv, 'max_class_tv': float(max_tv), 'within_class_tv': tv <= max_tv}
