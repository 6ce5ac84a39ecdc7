"""Synthetic test objects: blocky digits and simple reference shapes."""
from __future__ import annotations

import numpy as np

# 3x5 bitmap font; strokes stay several pixels wide after scaling to ~32 px
_FONT = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
    "F": ("111", "100", "110", "100", "100"),
    "L": ("100", "100", "100", "100", "111"),
}

# digits whose 180-degree rotation differs from the original
ASYMMETRIC_DIGITS = ("1", "3", "4", "6", "7")


def glyph(char: str, height: int = 32) -> np.ndarray:
    """Render ``char`` from the 3x5 font with nearest-neighbour scaling."""
    try:
        rows = _FONT[str(char)]
    except KeyError:
        raise ValueError(f"no glyph for {char!r}; available: {''.join(sorted(_FONT))}") from None
    bits = np.array([[c == "1" for c in r] for r in rows], dtype=np.float64)
    width = max(1, round(height * 3 / 5))
    ri = (np.arange(height) * 5) // height
    ci = (np.arange(width) * 3) // width
    return bits[np.ix_(ri, ci)]


def square(size: int) -> np.ndarray:
    return np.ones((size, size))


def ring(outer: int, inner: int) -> np.ndarray:
    """Filled square with a square hole; a compact, distinctive reference mark."""
    out = np.ones((outer, outer))
    lo = (outer - inner) // 2
    out[lo:lo + inner, lo:lo + inner] = 0.0
    return out


def place(canvas: np.ndarray, obj: np.ndarray, top_left: tuple[int, int],
          value: float = 1.0) -> np.ndarray:
    """Add ``value * obj`` into ``canvas`` in place and return the canvas."""
    r, c = top_left
    h, w = obj.shape
    if r < 0 or c < 0 or r + h > canvas.shape[0] or c + w > canvas.shape[1]:
        raise ValueError(f"object of shape {obj.shape} at {top_left} leaves canvas {canvas.shape}")
    canvas[r:r + h, c:c + w] += value * obj
    return canvas


def centered(obj: np.ndarray, size: int) -> np.ndarray:
    """Return ``obj`` centered on a ``size x size`` zero canvas."""
    canvas = np.zeros((size, size))
    h, w = obj.shape
    return place(canvas, obj, ((size - h) // 2, (size - w) // 2))


def bounding_box(image: np.ndarray) -> tuple[int, int]:
    """Height and width of the bounding box of non-zero pixels (0, 0 if empty)."""
    rows = np.flatnonzero(np.any(image != 0, axis=1))
    cols = np.flatnonzero(np.any(image != 0, axis=0))
    if rows.size == 0:
        return 0, 0
    return int(rows[-1] - rows[0] + 1), int(cols[-1] - cols[0] + 1)


def build_object(desc: dict) -> np.ndarray:
    """Build an object from a JSON element description.

    Recognized ``shape`` values: ``glyph`` (key ``char``, optional ``height``),
    ``square`` (``size``), ``ring`` (``outer``, ``inner``), ``file`` (``path``).
    """
    kind = desc.get("shape")
    if kind == "glyph":
        return glyph(desc["char"], int(desc.get("height", 32)))
    if kind == "square":
        return square(int(desc["size"]))
    if kind == "ring":
        return ring(int(desc["outer"]), int(desc["inner"]))
    if kind == "file":
        from .io import read_gray

        return read_gray(desc["path"])
    raise ValueError(f"unknown object shape {kind!r}")
