"""Shared Fourier numerics: DFTs, Wiener-Khinchin correlation, Radon projection
and central slices.

Conventions used everywhere in the package:

* forward transforms are unnormalized, inverse transforms carry ``1/N``;
* a *centered* transform puts both the spatial origin and zero frequency at
  index ``(H // 2, W // 2)`` (``fftshift(fft2(ifftshift(x)))``);
* pixel ``(row i, col j)`` has coordinates ``x = j - W // 2``, ``y = i - H // 2``;
  projection angle 0 integrates along ``y`` (column sums), so its central slice
  is the ``ky = 0`` row of the spectrum.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp


class InvalidImageError(ValueError):
    """Raised when an array does not satisfy the intensity-image contract."""


def as_image(image, *, signed: bool = False, name: str = "image") -> np.ndarray:
    """Validate and return a float64 2D copy-free view of ``image``."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2 or min(arr.shape) < 1:
        raise InvalidImageError(f"{name} must be a non-empty 2D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.count_nonzero(~np.isfinite(arr)))
        raise InvalidImageError(f"{name} has {bad} non-finite samples")
    if not signed and np.any(arr < 0):
        raise InvalidImageError(f"{name} has negative samples (min {arr.min():.3g})")
    return arr


def pad_even(arr: np.ndarray) -> np.ndarray:
    """Zero-pad one trailing row/column so both dimensions are even."""
    ph, pw = arr.shape[0] % 2, arr.shape[1] % 2
    if ph or pw:
        arr = np.pad(arr, ((0, ph), (0, pw)))
    return arr


def fft2c(arr: np.ndarray) -> np.ndarray:
    """Centered forward 2D DFT (no input validation)."""
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(arr)))


def ifft2c(arr: np.ndarray) -> np.ndarray:
    """Centered inverse 2D DFT (no input validation)."""
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(arr)))


@dataclass(frozen=True)
class ComplexSpectrum:
    data: np.ndarray
    dc_centered: bool = False

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.data)

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.data)


@dataclass(frozen=True)
class RadialSignal:
    """One-dimensional signal along a direction through the origin.

    ``bins[n_bins // 2]`` sits on the origin. ``coverage`` is the fraction of
    samples that fell inside the source grid (1.0 for projections).
    """

    angle: float
    bins: np.ndarray
    bin_spacing: float = 1.0
    coverage: float = 1.0

    def __post_init__(self):
        n = len(self.bins)
        if n < 4 or n % 2:
            raise ValueError(f"radial signals need an even length >= 4, got {n}")


def dft2(image, centered: bool = False) -> ComplexSpectrum:
    """Forward 2D DFT of an intensity image (unnormalized).

    With ``centered=True`` the spatial origin and DC both sit at the grid center.
    Odd-sized inputs are zero-padded to even size first.
    """
    arr = pad_even(as_image(image))
    data = fft2c(arr) if centered else np.fft.fft2(arr)
    return ComplexSpectrum(data, dc_centered=centered)


def idft2(spectrum: ComplexSpectrum) -> np.ndarray:
    """Inverse of :func:`dft2`; returns a complex array."""
    data = np.asarray(spectrum.data)
    if not np.all(np.isfinite(data)):
        raise InvalidImageError("spectrum has non-finite samples")
    return ifft2c(data) if spectrum.dc_centered else np.fft.ifft2(data)


def autocorrelate(image, mean_subtract: bool = False, zero_pad: bool = True) -> np.ndarray:
    """Autocorrelation via the Wiener-Khinchin route, DC-centered.

    ``zero_pad=True`` (default) gives the linear correlation on a ``2H x 2W``
    grid with zero lag at ``(H, W)``; otherwise the circular correlation on the
    input grid with zero lag at ``(H // 2, W // 2)``. The result is an
    unnormalized sum of products and may be signed when ``mean_subtract``.
    """
    arr = pad_even(as_image(image))
    if mean_subtract:
        arr = arr - arr.mean()
    shape = (2 * arr.shape[0], 2 * arr.shape[1]) if zero_pad else arr.shape
    spec = np.fft.fft2(arr, s=shape)
    corr = np.fft.ifft2(spec.real**2 + spec.imag**2).real
    return np.fft.fftshift(corr)


def _clean_trig(angle: float) -> tuple[float, float]:
    c, s = np.cos(angle), np.sin(angle)
    # exact zeros keep axis-aligned projections free of 1e-17 splatting
    c = 0.0 if abs(c) < 1e-12 else c
    s = 0.0 if abs(s) < 1e-12 else s
    return c, s


def normalize_angle(angle: float) -> float:
    a = float(np.mod(angle, np.pi))
    return 0.0 if a >= np.pi else a


def _footprint_cdf(t: np.ndarray, w1: float, w2: float) -> np.ndarray:
    """CDF of a unit pixel's shadow: the sum of two uniforms of widths ``w1 >= w2``."""
    if w2 < 1e-12:
        return np.clip(t / w1 + 0.5, 0.0, 1.0)
    a, b = (w1 + w2) / 2, (w1 - w2) / 2

    def q(u):
        return np.maximum(u, 0.0) ** 2 / 2

    return (q(t + a) - q(t + b) - q(t - b) + q(t - a)) / (w1 * w2)


@lru_cache(maxsize=32)
def projection_matrix(shape: tuple[int, int], angles: tuple[float, ...], n_bins: int,
                      bin_spacing: float = 1.0) -> sp.csr_matrix:
    """Sparse operator mapping a flattened image to stacked projections.

    Each unit pixel casts a trapezoidal shadow of width ``|cos a| + |sin a|``
    onto the projection axis ``t = x cos(a) + y sin(a)``; bin ``b`` receives
    the shadow's mass inside ``[b - 1/2, b + 1/2)``. At axis-aligned angles this
    is exactly a column (row) sum, and at oblique angles it avoids the lattice
    aliasing of point splatting. Mass landing outside the ``n_bins`` window is
    dropped. Row ``k * n_bins + b`` is bin ``b`` of angle ``angles[k]``.
    """
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    x = (xx - w // 2).ravel().astype(np.float64)
    y = (yy - h // 2).ravel().astype(np.float64)
    pix = np.arange(h * w)
    rows, cols, vals = [], [], []
    for k, angle in enumerate(angles):
        c, s = _clean_trig(angle)
        w1 = max(abs(c), abs(s)) / bin_spacing
        w2 = min(abs(c), abs(s)) / bin_spacing
        pos = (x * c + y * s) / bin_spacing + n_bins // 2
        half = (w1 + w2) / 2
        lo = np.floor(pos - half + 0.5).astype(np.int64)
        hi = np.floor(pos + half + 0.5).astype(np.int64)
        for step in range(int((hi - lo).max()) + 1):
            b = lo + step
            wgt = _footprint_cdf(b + 0.5 - pos, w1, w2) - _footprint_cdf(b - 0.5 - pos, w1, w2)
            keep = (b <= hi) & (b >= 0) & (b < n_bins) & (wgt > 1e-15)
            rows.append(k * n_bins + b[keep])
            cols.append(pix[keep])
            vals.append(wgt[keep])
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(angles) * n_bins, h * w),
    )
    mat.sum_duplicates()
    return mat


def radon_project(image, angle: float, n_bins: int, bin_spacing: float = 1.0) -> RadialSignal:
    """Line-integral projection of ``image`` at ``angle`` (radians).

    Angles outside ``[0, pi)`` are folded into that range.
    """
    if n_bins < 4 or n_bins % 2:
        raise ValueError(f"n_bins must be even and >= 4, got {n_bins}")
    arr = as_image(image, signed=True)
    angle = normalize_angle(angle)
    mat = projection_matrix(arr.shape, (angle,), int(n_bins), float(bin_spacing))
    return RadialSignal(angle, mat @ arr.ravel(), bin_spacing)


def central_slice(spectrum: ComplexSpectrum, angle: float, n_samples: int) -> RadialSignal:
    """Bilinearly sample a DC-centered spectrum along the line through DC.

    Sample ``i`` sits at radius ``i - n_samples // 2`` bins in direction
    ``(cos(angle), sin(angle))`` = ``(kx, ky)``. Out-of-grid samples are zero;
    the in-grid fraction is reported as ``coverage``.
    """
    if not spectrum.dc_centered:
        raise ValueError("central_slice needs a DC-centered spectrum")
    data = np.asarray(spectrum.data, dtype=np.complex128)
    h, w = data.shape
    c, s = _clean_trig(angle)
    r = np.arange(n_samples) - n_samples // 2
    col = w // 2 + r * c
    row = h // 2 + r * s
    inside = (col >= 0) & (col <= w - 1) & (row >= 0) & (row <= h - 1)
    out = np.zeros(n_samples, dtype=np.complex128)
    ci, ri = col[inside], row[inside]
    c0 = np.minimum(np.floor(ci).astype(int), w - 2)
    r0 = np.minimum(np.floor(ri).astype(int), h - 2)
    fc, fr = ci - c0, ri - r0
    out[inside] = (
        data[r0, c0] * (1 - fr) * (1 - fc)
        + data[r0, c0 + 1] * (1 - fr) * fc
        + data[r0 + 1, c0] * fr * (1 - fc)
        + data[r0 + 1, c0 + 1] * fr * fc
    )
    return RadialSignal(float(angle), out, 1.0, float(inside.mean()))
