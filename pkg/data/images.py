"""
Raster I/O

Label masks are stored as 8-bit single-channel PNG (or PGM by suffix) with
pixel value = ClassId. Gray images are stored as 16-bit PNG (8-bit for PGM).
"""

from pathlib import Path

import numpy as np
from PIL import Image

from phantom.classes import NUM_CLASSES


def save_mask(path: Path, mask: np.ndarray):
    """Write a label mask (values 0..7) as an 8-bit image."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"Mask must be 2-D, got shape {mask.shape}")
    if mask.size and (mask.min() < 0 or mask.max() >= NUM_CLASSES):
        raise ValueError("Mask contains values outside the ClassId range")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.astype(np.uint8)).save(path)


def load_mask(path: Path) -> np.ndarray:
    """Read a label mask written by save_mask."""
    with Image.open(path) as img:
        mask = np.array(img)
    if mask.ndim != 2:
        raise ValueError(f"{path}: expected a single-channel mask, got shape {mask.shape}")
    if mask.max(initial=0) >= NUM_CLASSES:
        raise ValueError(f"{path}: values outside the ClassId range")
    return mask.astype(np.uint8)


def save_image(path: Path, image: np.ndarray):
    """Write a [0,1] gray image; 16-bit for PNG, 8-bit otherwise."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"Image must be 2-D, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError("Image contains non-finite values")
    image = np.clip(image, 0.0, 1.0)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == '.png':
        data = np.rint(image * 65535.0).astype(np.uint16)
        Image.fromarray(data).save(path)
    else:
        data = np.rint(image * 255.0).astype(np.uint8)
        Image.fromarray(data).save(path)


def load_image(path: Path) -> np.ndarray:
    """Read a gray image as float64 in [0,1]."""
    with Image.open(path) as img:
        data = np.array(img)
    if data.ndim != 2:
        raise ValueError(f"{path}: expected a single-channel image, got shape {data.shape}")
    if data.dtype == np.uint8:
        return data.astype(np.float64) / 255.0
    return data.astype(np.float64) / 65535.0
