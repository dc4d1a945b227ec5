"""Image and mask file handling.

Inputs are 8- or 16-bit PNG or ASCII PPM/PGM images, scaled to [0, 1] on
load.  Label masks are single-channel images with 0 = background and
255 = foreground.  Outputs are written as 8-bit PNG with values clipped to
[0, 1] at write time (the in-memory pipeline itself never clips).
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .grid import ImageField


def _scale_to_unit(arr: np.ndarray) -> np.ndarray:
    if arr.dtype == np.uint8:
        return arr.astype(float) / 255.0
    if arr.dtype in (np.uint16, np.int32):
        # 16-bit PNGs arrive as uint16 or as mode "I" int32 arrays
        return arr.astype(float) / 65535.0
    return arr.astype(float)


def load_image(path) -> ImageField:
    """Load a PNG/PPM image as an ImageField with values in [0, 1]."""
    with Image.open(path) as img:
        if img.mode == "P":
            img = img.convert("RGB")
        arr = np.asarray(img)
    arr = _scale_to_unit(arr)
    if arr.ndim == 3 and arr.shape[2] == 4:
        arr = arr[:, :, :3]  # drop alpha
    return ImageField.from_array(arr)


def load_mask(path) -> np.ndarray:
    """Load a binary label mask (anything at or above half counts as 1)."""
    with Image.open(path) as img:
        if img.mode not in ("L", "I", "I;16", "1"):
            img = img.convert("L")
        arr = np.asarray(img)
    unit = _scale_to_unit(arr)
    if unit.ndim != 2:
        raise ValueError("masks must be single-channel images")
    return (unit >= 0.5).astype(float).ravel()


def save_image(path, image: ImageField):
    """Write an image as 8-bit PNG (grey or RGB), clipping into [0, 1]."""
    arr = np.clip(image.as_hwc(), 0.0, 1.0)
    data = np.round(arr * 255.0).astype(np.uint8)
    if data.shape[2] == 1:
        pil = Image.fromarray(data[:, :, 0], mode="L")
    elif data.shape[2] == 3:
        pil = Image.fromarray(data, mode="RGB")
    else:
        raise ValueError("only 1- or 3-channel images can be written")
    pil.save(path, format="PNG")


def save_mask(path, mask: np.ndarray, height: int, width: int):
    """Write a binary mask as an 8-bit 0/255 PNG."""
    m = np.asarray(mask, dtype=float).reshape(height, width)
    data = np.where(m >= 0.5, 255, 0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")
