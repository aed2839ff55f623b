"""PNG image I/O: 8-bit color in [0, 1] and 16-bit grayscale depth."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError


def load_image(path):
    """Load an 8-bit PNG as a 3 x H x W float array in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return np.moveaxis(arr, -1, 0)


def save_image(path, image):
    """Quantize a 3 x H x W array to 8-bit PNG via round(255 * clamp(x))."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DataError(f"save_image: expected 3 x H x W, got {arr.shape}")
    q = np.round(255.0 * np.clip(arr, 0.0, 1.0)).astype(np.uint8)
    Image.fromarray(np.moveaxis(q, 0, -1), mode="RGB").save(Path(path), format="PNG")


def load_depth(path):
    """Load a 16-bit grayscale PNG as raw H x W counts (full range kept)."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            arr = np.asarray(img)
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot read depth map {path}: {exc}") from exc
    if arr.ndim != 2:
        raise DataError(f"depth map {path} is not single-channel: shape {arr.shape}")
    return arr.astype(np.float64)


def save_depth(path, depth_counts):
    """Write raw H x W counts as a 16-bit grayscale PNG."""
    arr = np.asarray(depth_counts)
    q = np.clip(np.round(arr), 0, 65535).astype(np.uint16)
    Image.fromarray(q).save(Path(path), format="PNG")  # uint16 -> I;16
