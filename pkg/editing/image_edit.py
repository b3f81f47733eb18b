"""
Image Editing

Carries an image along with a mask edit: the target object's texture is
resampled with the same geometric map and blended into the image with
seamless cloning, or a separate source image is cloned into the edited
object region.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from phantom.classes import ClassId, check_image, check_mask
from .dsl import EditCommand, EditProgram
from .mask_ops import apply_command, bounding_box, source_indices
from .poisson import blend_texture

logger = logging.getLogger(__name__)


def transform_image(image: np.ndarray, obj: np.ndarray, cmd: EditCommand) -> np.ndarray:
    """
    Resample an image under the command's object transform.

    Pixels that map outside the canvas keep their original value.
    """
    iy, ix, inside = source_indices(obj.shape, cmd, bounding_box(obj).center)
    out = image.copy()
    out[inside] = image[iy[inside], ix[inside]]
    return out


def edit_image(mask: np.ndarray, image: np.ndarray, program: EditProgram,
               source: Optional[np.ndarray] = None,
               tol: float = 1e-8) -> Tuple[np.ndarray, np.ndarray]:
    """
    Apply an edit program to a mask and its image.

    Args:
        mask: LabelMask
        image: GrayImage paired with the mask
        program: Parsed edit program
        source: Optional GrayImage whose texture is cloned into each edited object
        tol: Poisson solver tolerance

    Returns:
        (edited mask, edited image)
    """
    mask = check_mask(mask, min_size=1)
    image = check_image(image, min_size=1)
    if image.shape != mask.shape:
        raise ValueError(f"Image {image.shape} and mask {mask.shape} differ in shape")
    if source is not None:
        source = check_image(source, min_size=1)
        if source.shape != mask.shape:
            raise ValueError(f"Source {source.shape} and mask {mask.shape} differ in shape")

    for cmd in program:
        cls = ClassId(cmd.cls)
        obj = mask == cls
        edited = apply_command(mask, cmd)
        region = edited == cls
        src = source if source is not None else transform_image(image, obj, cmd)
        image = blend_texture(src, image, region, tol)
        logger.debug("blended %d px of '%s'", int(region.sum()), cls.label)
        mask = edited
    return mask, image
