"""
Mask Edit Operations

Each command isolates one class, finds its minimal bounding box, resamples
the binary object about the box centre (nearest neighbour, inverse mapping),
fills vacated pixels with the nearest non-target label and paints the moved
object over whatever lies beneath it.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from phantom.classes import ClassId, check_mask
from .dsl import EditCommand, EditProgram, Rotate, Scale, Translate


class EditError(ValueError):
    """A command cannot be applied to this mask."""


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive pixel bounds."""

    top: int
    left: int
    bottom: int
    right: int

    @property
    def height(self) -> int:
        return self.bottom - self.top + 1

    @property
    def width(self) -> int:
        return self.right - self.left + 1

    @property
    def center(self) -> Tuple[float, float]:
        """(row, col) centre."""
        return (self.top + self.bottom) / 2.0, (self.left + self.right) / 2.0


def bounding_box(binary: np.ndarray) -> BoundingBox:
    """Minimal box enclosing the True pixels."""
    rows = np.flatnonzero(np.any(binary, axis=1))
    cols = np.flatnonzero(np.any(binary, axis=0))
    if rows.size == 0:
        raise EditError("Empty object has no bounding box")
    return BoundingBox(int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1]))


def _source_coords(cmd: EditCommand, yy: np.ndarray, xx: np.ndarray,
                   center: Tuple[float, float]):
    """Inverse map: where each destination pixel samples the original object."""
    cy, cx = center
    if isinstance(cmd, Scale):
        return cy + (yy - cy) / cmd.sy, cx + (xx - cx) / cmd.sx
    if isinstance(cmd, Translate):
        return yy - cmd.dy, xx - cmd.dx
    if isinstance(cmd, Rotate):
        # Counter-clockwise as displayed (rows grow downward).
        th = math.radians(cmd.degrees)
        c, s = math.cos(th), math.sin(th)
        dy, dx = yy - cy, xx - cx
        return cy + dx * s + dy * c, cx + dx * c - dy * s
    raise TypeError(f"Not an edit command: {cmd!r}")


def source_indices(shape: Tuple[int, int], cmd: EditCommand, center: Tuple[float, float]):
    """
    Nearest-neighbour source pixel of every destination pixel.

    Returns:
        (row index, column index, inside-canvas flag), each of the canvas shape
    """
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sy, sx = _source_coords(cmd, yy, xx, center)
    iy = np.floor(sy + 0.5).astype(np.int64)
    ix = np.floor(sx + 0.5).astype(np.int64)
    inside = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
    return iy, ix, inside


def transform_object(obj: np.ndarray, cmd: EditCommand) -> np.ndarray:
    """Resample a binary object under a command, clipped to the canvas."""
    iy, ix, inside = source_indices(obj.shape, cmd, bounding_box(obj).center)
    out = np.zeros_like(obj, dtype=bool)
    out[inside] = obj[iy[inside], ix[inside]]
    return out


def apply_command(mask: np.ndarray, cmd: EditCommand) -> np.ndarray:
    """
    Apply one edit command.

    Args:
        mask: LabelMask
        cmd: Scale, Translate or Rotate

    Returns:
        New LabelMask of the same shape

    Raises:
        EditError: target class absent or moved entirely off the canvas
    """
    mask = check_mask(mask, min_size=1)
    cls = ClassId(cmd.cls)
    obj = mask == cls
    if not obj.any():
        raise EditError(f"Class '{cls.label}' is not present in the mask")

    moved = transform_object(obj, cmd)
    if not moved.any():
        raise EditError(f"Transformed '{cls.label}' object lies entirely outside the canvas")

    out = mask.copy()
    vacated = obj & ~moved
    if vacated.any():
        if obj.all():
            out[vacated] = ClassId.BACKGROUND
        else:
            _, (ny, nx) = ndimage.distance_transform_edt(obj, return_indices=True)
            out[vacated] = mask[ny[vacated], nx[vacated]]
    out[moved] = cls
    return out


def apply_program(mask: np.ndarray, program: EditProgram) -> np.ndarray:
    """Apply commands left to right; each sees the previous result."""
    for cmd in program:
        mask = apply_command(mask, cmd)
    return mask
