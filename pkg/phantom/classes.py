"""
Class Taxonomy

Fixed mapping of semantic label values to musculoskeletal classes, with the
reference area statistics the phantom generator is calibrated against.
"""

from enum import IntEnum
from typing import Dict

import numpy as np


class ClassId(IntEnum):
    BACKGROUND = 0
    MUSCLE = 1
    TENDON = 2
    BONE = 3
    DITF = 4
    CALCIFICATION = 5
    BONE_IRREGULARITY = 6
    ANISOTROPY = 7

    @property
    def label(self) -> str:
        """Lower-case name used in configs, manifests and the edit grammar."""
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "ClassId":
        """
        Look up a class by name, case-insensitively.

        Underscores and hyphens are optional ('bone-irregularity',
        'BoneIrregularity' and 'bone_irregularity' are the same class).
        """
        key = name.strip().lower().replace('-', '').replace('_', '')
        for member in cls:
            if member.name.lower().replace('_', '') == key:
                return member
        raise KeyError(name)


NUM_CLASSES = len(ClassId)

# Mean fraction of total image area per class in the reference MSK dataset.
REFERENCE_MEAN_FRACTION: Dict[ClassId, float] = {
    ClassId.BACKGROUND: 0.5542,
    ClassId.MUSCLE: 0.2726,
    ClassId.TENDON: 0.1031,
    ClassId.BONE: 0.0266,
    ClassId.DITF: 0.0107,
    ClassId.CALCIFICATION: 0.00043,
    ClassId.BONE_IRREGULARITY: 0.0119,
    ClassId.ANISOTROPY: 0.0203,
}

DEFAULT_ECHOGENICITY: Dict[ClassId, float] = {
    ClassId.BACKGROUND: 0.0,
    ClassId.MUSCLE: 0.35,
    ClassId.TENDON: 0.65,
    ClassId.BONE: 0.9,
    ClassId.DITF: 0.15,
    ClassId.CALCIFICATION: 0.95,
    ClassId.BONE_IRREGULARITY: 0.8,
    ClassId.ANISOTROPY: 0.25,
}

# Classes that make up the tendon band (tendon plus the findings drawn inside it).
TENDON_BAND = (ClassId.TENDON, ClassId.DITF, ClassId.CALCIFICATION, ClassId.ANISOTROPY)


def class_table() -> Dict[str, int]:
    """Serializable name -> value mapping written into every manifest."""
    return {member.label: int(member) for member in ClassId}


def class_fractions(mask: np.ndarray) -> np.ndarray:
    """Area fraction of each class in a mask (length NUM_CLASSES)."""
    counts = np.bincount(np.asarray(mask).ravel(), minlength=NUM_CLASSES)
    return counts[:NUM_CLASSES] / max(1, np.asarray(mask).size)


def check_mask(mask: np.ndarray, min_size: int = 16) -> np.ndarray:
    """
    Validate a LabelMask raster.

    Returns:
        The mask as a uint8 array

    Raises:
        ValueError: wrong rank, too small, or values outside the ClassId range
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"LabelMask must be 2-D, got shape {mask.shape}")
    if min(mask.shape) < min_size:
        raise ValueError(f"LabelMask {mask.shape} smaller than {min_size}px")
    if not np.issubdtype(mask.dtype, np.integer):
        raise ValueError(f"LabelMask must be integer-valued, got {mask.dtype}")
    if mask.min() < 0 or mask.max() >= NUM_CLASSES:
        raise ValueError("LabelMask contains values outside 0..7")
    return mask.astype(np.uint8, copy=False)


def check_image(image: np.ndarray, min_size: int = 16) -> np.ndarray:
    """
    Validate a GrayImage raster (finite values in [0,1]).

    Returns:
        The image as a float64 array
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"GrayImage must be 2-D, got shape {image.shape}")
    if min(image.shape) < min_size:
        raise ValueError(f"GrayImage {image.shape} smaller than {min_size}px")
    if not np.all(np.isfinite(image)):
        raise ValueError("GrayImage contains non-finite values")
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError("GrayImage values outside [0,1]")
    return image
