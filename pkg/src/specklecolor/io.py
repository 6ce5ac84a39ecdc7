"""Image and JSON file helpers.

Grayscale images are 8- or 16-bit PGM/PNG; composites are 8-bit RGB PNG.
JSON is written with sorted keys and a fixed layout so identical content gives
identical bytes.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

GRAY_SUFFIXES = (".png", ".pgm")


def _check_suffix(path: Path) -> None:
    if path.suffix.lower() not in GRAY_SUFFIXES:
        raise ValueError(f"unsupported image format {path.suffix!r}; use .png or .pgm")


def read_gray(path) -> np.ndarray:
    """Load an 8/16-bit grayscale PGM or PNG as float64 raw counts."""
    path = Path(path)
    _check_suffix(path)
    if not path.is_file():
        raise FileNotFoundError(f"image not found: {path}")
    with Image.open(path) as im:
        if im.mode not in ("L", "I", "I;16", "I;16B", "1"):
            raise ValueError(f"{path}: expected a grayscale image, got mode {im.mode}")
        return np.asarray(im, dtype=np.float64)


def write_gray16(path, image, scale: float | None = None) -> float:
    """Write ``image`` as 16-bit grayscale; returns the intensity mapped to 65535.

    ``scale`` defaults to the image maximum. Values are rounded and clipped.
    """
    path = Path(path)
    _check_suffix(path)
    img = np.asarray(image, dtype=np.float64)
    scale = float(img.max()) if scale is None else float(scale)
    if scale <= 0:
        scale = 1.0
    counts = np.clip(np.rint(img / scale * 65535.0), 0, 65535).astype(np.uint16)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(counts).save(path)
    return scale


def write_rgb8(path, rgb) -> None:
    """Write an (H, W, 3) array with values in [0, 1] as an 8-bit RGB PNG."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) array, got {rgb.shape}")
    data = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data).save(path)


def read_rgb8(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(obj))


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    with open(path) as fh:
        return json.load(fh)
