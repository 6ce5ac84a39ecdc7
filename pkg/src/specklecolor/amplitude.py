"""Fourier-amplitude retrieval from the speckle autocorrelation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .spectral import as_image, autocorrelate, fft2c

NOISY_AUTOCORRELATION = "noisy_autocorrelation"


@dataclass(frozen=True)
class AmplitudeEstimate:
    amplitude: np.ndarray  # DC-centered, >= 0
    pedestal_removed: bool = False
    apodization: tuple[str, float] = ("none", 0.0)
    clamp_fraction: float = 0.0
    warning: Optional[str] = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.amplitude.shape


def raised_cosine_taper(size: int, radius: float, taper: float) -> np.ndarray:
    """Radial weight: 1 inside ``(1 - taper) * radius``, cosine roll-off to 0 at ``radius``."""
    yy, xx = np.mgrid[0:size, 0:size] - size // 2
    r = np.hypot(xx, yy) / radius
    inner = 1.0 - taper
    if taper <= 0:
        return (r <= 1).astype(np.float64)
    ramp = 0.5 * (1 + np.cos(np.pi * np.clip((r - inner) / taper, 0, 1)))
    return np.where(r <= inner, 1.0, ramp)


def object_autocorrelation(speckle, crop_radius: int, taper: float = 0.5) -> np.ndarray:
    """Estimate the object autocorrelation from one speckle image.

    Mean-subtracted, zero-padded autocorrelation, cropped to the central
    ``2 * crop_radius`` square and apodized with a radial raised cosine whose
    roll-off spans the outer ``taper`` fraction of the radius.
    """
    img = as_image(speckle, name="speckle")
    if crop_radius < 2:
        raise ValueError("crop_radius must be at least 2")
    if min(img.shape) < 4 * 2 * crop_radius:
        raise ValueError(
            f"crop too large: speckle {img.shape} must be at least 4x the crop window {2 * crop_radius}"
        )
    if not 0 <= taper <= 1:
        raise ValueError("taper must lie in [0, 1]")
    corr = autocorrelate(img, mean_subtract=True, zero_pad=True)
    cy, cx = corr.shape[0] // 2, corr.shape[1] // 2
    crop = corr[cy - crop_radius:cy + crop_radius, cx - crop_radius:cx + crop_radius]
    return crop * raised_cosine_taper(2 * crop_radius, crop_radius, taper)


def fourier_amplitude(autocorr, *, pedestal_removed: bool = False,
                      apodization: tuple[str, float] = ("none", 0.0),
                      max_clamp_fraction: float = 0.5) -> AmplitudeEstimate:
    """Fourier modulus from a DC-centered autocorrelation.

    Negative spectral values (noise) are clamped to zero before the square root;
    if more than ``max_clamp_fraction`` of bins were clamped the estimate carries
    the ``noisy_autocorrelation`` warning.
    """
    ac = as_image(autocorr, signed=True, name="autocorrelation")
    power = fft2c(ac).real
    negative = power < 0
    clamp = float(negative.mean())
    amp = np.sqrt(np.where(negative, 0.0, power))
    warning = NOISY_AUTOCORRELATION if clamp > max_clamp_fraction else None
    return AmplitudeEstimate(amp, pedestal_removed, apodization, clamp, warning)


def estimate_amplitude(speckle, crop_radius: int, grid_side: int | None = None,
                       taper: float = 0.5) -> AmplitudeEstimate:
    """Autocorrelation crop followed by :func:`fourier_amplitude`.

    When ``grid_side`` exceeds the crop window the cropped autocorrelation is
    zero-padded so the amplitude lands on a ``grid_side`` frequency grid.
    """
    ac = object_autocorrelation(speckle, crop_radius, taper)
    if grid_side is not None and grid_side != ac.shape[0]:
        if grid_side < ac.shape[0]:
            raise ValueError(f"grid_side {grid_side} smaller than crop window {ac.shape[0]}")
        pad = grid_side - ac.shape[0]
        ac = np.pad(ac, ((pad // 2, pad - pad // 2),) * 2)
    return fourier_amplitude(ac, pedestal_removed=True, apodization=("raised_cosine", taper))
