"""PNG read/write for RGB frames and 16-bit instance-ID maps."""

from __future__ import annotations

import numpy as np
from PIL import Image


def save_rgb(path, rgb: np.ndarray):
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8)).save(path, format="PNG")


def load_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def save_ids(path, ids: np.ndarray):
    """16-bit grayscale PNG."""
    arr = np.ascontiguousarray(ids, dtype=np.uint16)
    Image.fromarray(arr.astype("<u2")).save(path, format="PNG")


def load_ids(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im, dtype=np.uint16).copy() if im.mode in ("I;16", "I;16B") \
            else np.asarray(im).astype(np.uint16)


def image_size(path):
    """(width, height) without decoding pixels."""
    with Image.open(path) as im:
        return im.size
