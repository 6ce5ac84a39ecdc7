"""Synthetic scattering laboratory.

A scattering layer is modelled as a single random phase screen in a circular
pupil. Its intensity PSF is fully developed speckle, and an incoherent object
inside the memory-effect range images to ``object (*) PSF``.

Random numbers come from counter-based Philox streams keyed by explicit seeds,
so channels can be simulated in any order or concurrently with identical output.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .objects import bounding_box
from .spectral import as_image


class MemoryEffectError(ValueError):
    """The object is too large for the shift-invariant (memory-effect) model."""

    code = "memory_effect"


def philox(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def derive_seed(*key: int) -> int:
    """Deterministic 63-bit seed for a sub-stream (e.g. ``(run_seed, channel)``)."""
    state = np.random.SeedSequence([int(k) for k in key]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


@dataclass(frozen=True)
class PsfModel:
    """Pupil-plane description of one scattering PSF.

    ``aperture_radius`` is the pupil radius as a fraction of the grid
    half-width in frequency space; speckle grains are about ``1 / aperture_radius``
    pixels across. ``phase_screen`` overrides the seeded random screen.
    """

    seed: int
    grid: int = 512
    aperture_radius: float = 0.25
    phase_screen: Optional[np.ndarray] = field(default=None, compare=False)

    def screen(self) -> np.ndarray:
        if self.phase_screen is not None:
            screen = np.asarray(self.phase_screen, dtype=np.float64)
            if screen.shape != (self.grid, self.grid):
                raise ValueError(f"phase screen shape {screen.shape} != grid {self.grid}")
            return screen
        return philox(self.seed).uniform(0.0, 2 * np.pi, size=(self.grid, self.grid))


@dataclass(frozen=True)
class NoiseParams:
    """Camera noise. ``photon_scale`` is the expected photon count at the brightest pixel."""

    photon_scale: float
    read_noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.photon_scale > 0:
            raise ValueError("photon_scale must be positive")
        if self.read_noise_sigma < 0:
            raise ValueError("read_noise_sigma must be non-negative")


def pupil_disk(grid: int, aperture_radius: float) -> np.ndarray:
    """Unshifted (DC at index 0) binary pupil."""
    k = np.fft.fftfreq(grid) * grid
    radius = aperture_radius * grid / 2
    return (np.hypot(*np.meshgrid(k, k)) <= radius).astype(np.float64)


def gen_speckle_psf(model: PsfModel) -> np.ndarray:
    """Intensity PSF ``|IFT(pupil * exp(i screen))|^2``, unit sum, lobe at grid center."""
    if not 0.0 < model.aperture_radius <= 1.0:
        raise ValueError(f"aperture_radius must lie in (0, 1], got {model.aperture_radius}")
    if model.grid < 8 or model.grid % 2:
        raise ValueError(f"grid must be even and >= 8, got {model.grid}")
    field_ = np.fft.ifft2(pupil_disk(model.grid, model.aperture_radius) * np.exp(1j * model.screen()))
    psf = np.fft.fftshift(field_.real**2 + field_.imag**2)
    return psf / psf.sum()


def check_memory_effect(obj: np.ndarray, grid: int, fraction: float = 1 / 8) -> None:
    h, w = bounding_box(obj)
    limit = int(grid * fraction)
    if max(h, w) > limit:
        raise MemoryEffectError(
            f"object support {h}x{w} px exceeds the memory-effect bound of {limit} px "
            f"(grid {grid} / {round(1 / fraction)})"
        )


def convolve_same(obj: np.ndarray, psf: np.ndarray) -> np.ndarray:
    """Linear (zero-padded) convolution cropped to the PSF grid.

    The crop is anchored so that a delta at the object's center pixel
    ``(h // 2, w // 2)`` reproduces the PSF exactly.
    """
    h, w = obj.shape
    H, W = psf.shape
    shape = (H + h - 1, W + w - 1)
    full = np.fft.irfft2(np.fft.rfft2(obj, s=shape) * np.fft.rfft2(psf, s=shape), s=shape)
    return full[h // 2:h // 2 + H, w // 2:w // 2 + W]


def apply_noise(clean: np.ndarray, noise: NoiseParams, stream: int = 0,
                full_scale: float | None = None) -> np.ndarray:
    """Poisson photon noise plus Gaussian read noise, clamped at zero.

    ``full_scale`` is the intensity that maps to ``photon_scale`` photons
    (default: the image maximum). Output is in photon counts.
    """
    full_scale = float(clean.max()) if full_scale is None else float(full_scale)
    if full_scale <= 0:
        return np.zeros_like(clean)
    rng = philox(noise.seed, stream)
    counts = rng.poisson(np.clip(clean, 0, None) * (noise.photon_scale / full_scale)).astype(np.float64)
    if noise.read_noise_sigma > 0:
        counts += rng.normal(0.0, noise.read_noise_sigma, size=counts.shape)
    return np.clip(counts, 0.0, None)


def simulate_speckle(obj, psf, noise: NoiseParams | None = None, *,
                     memory_fraction: float = 1 / 8) -> np.ndarray:
    """Speckle image of ``obj`` behind the scattering layer described by ``psf``.

    Raises :class:`MemoryEffectError` if the object's support exceeds
    ``memory_fraction`` of the PSF grid.
    """
    obj = as_image(obj, name="object")
    psf = as_image(psf, name="psf")
    check_memory_effect(obj, min(psf.shape), memory_fraction)
    clean = np.clip(convolve_same(obj, psf), 0.0, None)
    return clean if noise is None else apply_noise(clean, noise)


@dataclass
class SceneSpec:
    """Multi-channel synthetic scene on a shared object canvas.

    ``reference_object`` (same canvas) is added with unit transmissivity to
    every channel. ``gains`` model the camera's per-channel spectral response.
    """

    objects: Sequence[np.ndarray]
    wavelengths_nm: Sequence[float]
    reference_object: Optional[np.ndarray] = None
    grid: int = 512
    aperture_radius: float = 0.11
    gains: Optional[Sequence[float]] = None
    photon_scale: Optional[float] = None
    read_noise_sigma: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        if len(self.objects) < 1:
            raise ValueError("scene needs at least one channel")
        if len(self.wavelengths_nm) != len(self.objects):
            raise ValueError("one wavelength per channel object is required")
        shapes = {np.shape(o) for o in self.objects}
        if self.reference_object is not None:
            shapes.add(np.shape(self.reference_object))
        if len(shapes) != 1:
            raise ValueError(f"channel objects must share dimensions, got {sorted(shapes)}")
        if self.gains is not None and len(self.gains) != len(self.objects):
            raise ValueError("one gain per channel is required")
        if self.photon_scale is not None and not self.photon_scale > 0:
            raise ValueError("photon_scale must be positive (or None to disable noise)")

    def channel_object(self, c: int) -> np.ndarray:
        obj = np.asarray(self.objects[c], dtype=np.float64)
        if self.reference_object is not None:
            obj = obj + np.asarray(self.reference_object, dtype=np.float64)
        return obj

    @property
    def noise(self) -> NoiseParams | None:
        if self.photon_scale is None:
            return None
        return NoiseParams(self.photon_scale, self.read_noise_sigma, self.noise_seed)


def simulate_channels(scene: SceneSpec, psf_seeds: Sequence[int], *, return_psfs: bool = False):
    """Simulate one speckle image per channel, each with its own PSF.

    Noise, when enabled, uses one full-scale for the whole stack so that
    inter-channel intensity ratios (and injected gains) survive.
    """
    from .color import Channel, ChannelStack

    if len(psf_seeds) != len(scene.objects):
        raise ValueError(f"need {len(scene.objects)} PSF seeds, got {len(psf_seeds)}")
    gains = scene.gains if scene.gains is not None else [1.0] * len(scene.objects)
    psfs, clean = [], []
    for c, seed in enumerate(psf_seeds):
        psf = gen_speckle_psf(PsfModel(int(seed), scene.grid, scene.aperture_radius))
        psfs.append(psf)
        clean.append(gains[c] * simulate_speckle(scene.channel_object(c), psf))
    noise = scene.noise
    if noise is not None:
        full_scale = max(float(im.max()) for im in clean)
        images = [apply_noise(im, noise, stream=c, full_scale=full_scale) for c, im in enumerate(clean)]
    else:
        images = clean
    stack = ChannelStack(
        [Channel(float(wl), im) for wl, im in zip(scene.wavelengths_nm, images)],
        metadata={"psf_seeds": [int(s) for s in psf_seeds], "aperture_radius": scene.aperture_radius,
                  "grid": scene.grid, "gains": [float(g) for g in gains]},
    )
    return (stack, psfs) if return_psfs else stack
