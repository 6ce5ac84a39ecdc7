"""Image formation from Fourier amplitude and phase, the HIO baseline, and
translation-aware quality metrics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .amplitude import AmplitudeEstimate
from .bispectrum import PhaseGrid
from .forward import philox
from .spectral import as_image, fft2c, ifft2c


class CoverageError(ValueError):
    """The phase grid does not cover enough of the amplitude's significant bins."""

    code = "insufficient_phase_coverage"


@dataclass(frozen=True)
class Alignment:
    score: float
    shift: tuple[int, int]
    flipped: bool
    upright_score: float
    flipped_score: Optional[float] = None
    degenerate: bool = False


def _wrap(idx: int, n: int) -> int:
    return idx - n if idx >= n // 2 else idx


def _best_shift(a: np.ndarray, b: np.ndarray) -> tuple[float, tuple[int, int]]:
    corr = np.fft.ifft2(np.conj(np.fft.fft2(a)) * np.fft.fft2(b)).real
    corr /= np.sqrt(np.sum(a * a) * np.sum(b * b))
    k = int(np.argmax(corr))
    i, j = divmod(k, corr.shape[1])
    return float(corr[i, j]), (_wrap(i, corr.shape[0]), _wrap(j, corr.shape[1]))


def ncc_aligned(a, b, try_flip: bool = True) -> Alignment:
    """Maximum normalized cross-correlation over all circular shifts.

    ``shift`` is the ``(rows, cols)`` displacement ``s`` maximizing
    ``sum a(x) b(x + s)``, so ``b = np.roll(a, s)`` yields ``s``. With
    ``try_flip`` the 180-degree rotated ``b`` is also searched and
    ``flipped`` reports whether it scored higher.
    """
    a = as_image(a, signed=True, name="a")
    b = as_image(b, signed=True, name="b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    a0, b0 = a - a.mean(), b - b.mean()
    if not (np.any(a0) and np.any(b0)):
        return Alignment(0.0, (0, 0), False, 0.0, 0.0 if try_flip else None, degenerate=True)
    up, shift = _best_shift(a0, b0)
    if not try_flip:
        return Alignment(up, shift, False, up)
    down, fshift = _best_shift(a0, b0[::-1, ::-1])
    if down > up:
        return Alignment(down, fshift, True, up, down)
    return Alignment(up, shift, False, up, down)


@dataclass
class ReconstructionResult:
    image: np.ndarray
    method: str  # "triple-correlation" or "hio"
    quality: Optional[float] = None
    orientation_ok: Optional[bool] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def accepted(self) -> bool:
        return self.diagnostics.get("clamp_energy_fraction", 0.0) < 0.2


def significant_bins(amplitude: np.ndarray, energy: float = 0.95) -> np.ndarray:
    """Smallest set of bins holding ``energy`` of the spectral power."""
    power = (amplitude**2).ravel()
    order = np.argsort(power, kind="stable")[::-1]
    cum = np.cumsum(power[order])
    if cum[-1] == 0:
        return np.zeros(amplitude.shape, dtype=bool)
    count = int(np.searchsorted(cum, energy * cum[-1])) + 1
    mask = np.zeros(power.size, dtype=bool)
    mask[order[:count]] = True
    return mask.reshape(amplitude.shape)


def _finish(raw: np.ndarray, method: str, truth, diagnostics: dict) -> ReconstructionResult:
    total = float(np.sum(raw**2))
    negative = float(np.sum(raw[raw < 0] ** 2))
    img = np.clip(raw, 0.0, None)
    peak = img.max()
    if peak > 0:
        img = img / peak
    diagnostics["clamp_energy_fraction"] = negative / total if total > 0 else 0.0
    result = ReconstructionResult(img, method, diagnostics=diagnostics)
    if truth is not None:
        score(result, truth)
    return result


def score(result: ReconstructionResult, truth) -> ReconstructionResult:
    """Fill ``quality`` and ``orientation_ok`` against a ground-truth image."""
    al = ncc_aligned(result.image, truth, try_flip=True)
    result.quality = al.upright_score
    result.orientation_ok = bool(al.upright_score > al.flipped_score)
    result.diagnostics["ncc_flipped"] = al.flipped_score
    result.diagnostics["alignment_shift"] = list(al.shift)
    return result


def reconstruct(amplitude: AmplitudeEstimate, phase: PhaseGrid, truth=None,
                min_coverage: float = 0.25) -> ReconstructionResult:
    """Inverse-transform ``amplitude * exp(i phase)`` over the covered bins.

    The real part is clamped at zero and scaled to a unit maximum. Raises
    :class:`CoverageError` if fewer than ``min_coverage`` of the amplitude's
    significant bins carry phase.
    """
    amp = np.asarray(amplitude.amplitude)
    if amp.shape != phase.phase.shape:
        raise ValueError(f"amplitude {amp.shape} and phase {phase.phase.shape} grids differ")
    sig = significant_bins(amp)
    n_sig = int(sig.sum())
    cov = float((sig & phase.mask).sum() / n_sig) if n_sig else 0.0
    if cov < min_coverage:
        raise CoverageError(f"phase covers {cov:.1%} of significant amplitude bins (< {min_coverage:.0%})")
    spectrum = np.where(phase.mask, amp * np.exp(1j * phase.phase), 0.0)
    raw = ifft2c(spectrum).real
    diag = {"phase_coverage": cov, "amplitude_clamp_fraction": amplitude.clamp_fraction}
    return _finish(raw, "triple-correlation", truth, diag)


def fourier_residual(estimate: np.ndarray, amp: np.ndarray) -> float:
    norm = np.linalg.norm(amp)
    return float(np.linalg.norm(np.abs(fft2c(estimate)) - amp) / norm) if norm else 0.0


def hio_reconstruct(amplitude: AmplitudeEstimate, support_radius: float, iterations: int = 2000,
                    feedback: float = 0.9, seed: int = 0, truth=None, mode: str = "hio",
                    track: bool = False) -> ReconstructionResult:
    """Fienup hybrid input-output with a centered disk support and positivity.

    Starts from the measured modulus with uniform random phase. ``mode="er"``
    runs plain error reduction instead. The constrained iterate with the
    lowest Fourier residual is returned; ``diagnostics["residual"]`` holds it.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not 0 < feedback <= 1:
        raise ValueError("feedback must lie in (0, 1]")
    if mode not in ("hio", "er"):
        raise ValueError(f"unknown mode {mode!r}")
    amp = np.asarray(amplitude.amplitude, dtype=np.float64)
    h, w = amp.shape
    yy, xx = np.mgrid[0:h, 0:w]
    support = np.hypot(yy - h // 2, xx - w // 2) <= support_radius
    rng = philox(seed)
    g = ifft2c(amp * np.exp(2j * np.pi * rng.random(amp.shape))).real
    best, best_res = None, np.inf
    history = []
    for _ in range(iterations):
        G = fft2c(g)
        gp = ifft2c(amp * np.exp(1j * np.angle(G))).real
        ok = support & (gp >= 0)
        if mode == "hio":
            g = np.where(ok, gp, g - feedback * gp)
        else:
            g = np.where(ok, gp, 0.0)
        est = np.where(ok, gp, 0.0)
        res = fourier_residual(est, amp)
        if track:
            history.append(res)
        if res < best_res:
            best, best_res = est, res
    diag = {"residual": best_res, "iterations": iterations, "feedback": feedback, "seed": seed}
    if track:
        diag["residual_history"] = history
    return _finish(best, "hio", truth, diag)
