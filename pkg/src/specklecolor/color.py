"""Multi-channel reconstruction, registration and color compositing.

Each wavelength channel is reconstructed on its own. The bispectrum keeps
orientation but not absolute position, so channels are brought into a common
frame with a shared reference object and integer translations only. Nothing
here rotates or flips an image.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .io import write_gray16, write_json, write_rgb8
from .pipeline import PipelineParams, reconstruct_speckle
from .reconstruct import ReconstructionResult
from .spectral import as_image

MIN_REGISTRATION_PEAK = 0.3


@dataclass(frozen=True)
class Channel:
    wavelength_nm: float
    speckle: np.ndarray


@dataclass
class ChannelStack:
    channels: list[Channel]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.channels:
            raise ValueError("channel stack is empty")
        wls = [float(c.wavelength_nm) for c in self.channels]
        if len(set(wls)) != len(wls):
            raise ValueError(f"duplicate wavelengths in {wls}")
        shapes = {as_image(c.speckle, name=f"channel {c.wavelength_nm} nm").shape for c in self.channels}
        if len(shapes) != 1:
            raise ValueError(f"channels differ in size: {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.channels)

    def __getitem__(self, i: int) -> Channel:
        return self.channels[i]

    @property
    def wavelengths(self) -> list[float]:
        return [float(c.wavelength_nm) for c in self.channels]


def calibrate_channels(stack: ChannelStack) -> np.ndarray:
    """Gain correction per channel, ``mean(first) / mean(channel)``.

    Meant to be run on frames of a spectrally flat target so that multiplying
    channel ``c`` by ``gain[c]`` cancels the camera's spectral response.
    """
    means = np.array([float(np.mean(c.speckle)) for c in stack.channels])
    bad = [stack.wavelengths[i] for i in np.flatnonzero(means <= 0)]
    if bad:
        raise ValueError(f"zero-mean channel(s) at {bad} nm cannot be calibrated")
    return means[0] / means


def _failed(shape: tuple[int, int], exc: Exception) -> ReconstructionResult:
    code = getattr(exc, "code", type(exc).__name__)
    return ReconstructionResult(np.zeros(shape), "triple-correlation",
                                diagnostics={"error": str(exc), "error_code": code})


def _one_channel(speckle, params: PipelineParams, truth, workers: int,
                 keep_slices: bool = False) -> ReconstructionResult:
    img = as_image(speckle, name="speckle")
    if not np.any(img != img.flat[0]):
        raise ValueError("speckle image is constant (no signal)")
    result = reconstruct_speckle(img, params, truth, workers=workers, keep_slices=keep_slices)
    result.diagnostics["flux"] = float(img.sum())
    return result


def flux_scaled(result: ReconstructionResult) -> np.ndarray:
    """Reconstruction rescaled so its sum equals the channel's measured flux.

    Reconstructions are peak-normalized; this restores relative brightness
    between channels (a unit-sum PSF conserves the object's total intensity).
    """
    total = result.image.sum()
    flux = result.diagnostics.get("flux")
    if flux is None or total <= 0:
        return result.image
    return result.image * (flux / total)


def reconstruct_channels(stack: ChannelStack, params: PipelineParams = PipelineParams(),
                         truths: Optional[Sequence] = None, workers: int = 1,
                         keep_slices: bool = False) -> list[ReconstructionResult]:
    """Run the monochrome pipeline on every channel.

    A channel that raises is returned as a zero image with
    ``diagnostics["error"]`` set; the others are unaffected. Output does not
    depend on ``workers``.
    """
    n = len(stack)
    truths = list(truths) if truths is not None else [None] * n
    if len(truths) != n:
        raise ValueError("one ground truth per channel is required")
    shape = (params.tile_side, params.tile_side)
    inner = max(1, workers // n)

    def run(i: int) -> ReconstructionResult:
        try:
            return _one_channel(stack.channels[i].speckle, params, truths[i], inner, keep_slices)
        except (ValueError, ArithmeticError) as exc:
            return _failed(shape, exc)

    if workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=min(workers, n)) as pool:
            return list(pool.map(run, range(n)))
    return [run(i) for i in range(n)]


@dataclass(frozen=True)
class Registration:
    shifts: list[tuple[int, int]]  # (rows, cols) relative to channel 0
    positions: list[tuple[int, int]]  # template top-left per channel
    peaks: list[float]
    registered: list[bool]

    @property
    def all_registered(self) -> bool:
        return all(self.registered)


def match_template(image, template, min_energy: float = 0.05) -> tuple[float, tuple[int, int]]:
    """Circular normalized cross-correlation template search.

    Returns the peak NCC and the top-left ``(row, col)`` at which ``template``
    best matches ``image``. Windows whose variance is below ``min_energy``
    times the largest window variance score 0, so near-empty background
    cannot produce chance matches.
    """
    img = as_image(image, signed=True, name="image")
    tpl = as_image(template, signed=True, name="template")
    if tpl.shape[0] > img.shape[0] or tpl.shape[1] > img.shape[1]:
        raise ValueError("template larger than image")
    t0 = tpl - tpl.mean()
    tnorm = np.sqrt(np.sum(t0**2))
    if tnorm == 0:
        raise ValueError("reference template has zero variance")
    h, w = img.shape
    box = np.zeros((h, w))
    box[:tpl.shape[0], :tpl.shape[1]] = 1.0
    kernel = np.zeros((h, w))
    kernel[:tpl.shape[0], :tpl.shape[1]] = t0
    f_img = np.fft.fft2(img)

    def corr(k):
        return np.fft.ifft2(f_img * np.conj(np.fft.fft2(k))).real

    num = corr(kernel)
    n = tpl.size
    local_sum = corr(box)
    local_sq = np.fft.ifft2(np.fft.fft2(img**2) * np.conj(np.fft.fft2(box))).real
    var = np.clip(local_sq - local_sum**2 / n, 0.0, None)
    floor = max(min_energy * float(np.max(var)), 1e-300)
    den = np.sqrt(var) * tnorm
    ncc = np.where(var > floor, num / np.where(den > 0, den, 1.0), 0.0)
    k = int(np.argmax(ncc))
    i, j = divmod(k, w)
    return float(ncc[i, j]), (i, j)


def reference_template(reference, margin: int = 4) -> np.ndarray:
    """Crop a reference image to its bounding box plus a zero margin.

    The margin matters: a reconstruction is band-limited, so a template cut
    flush to the object matches edges anywhere in the frame, whereas the
    surrounding dark border makes the match specific to an isolated blob.
    """
    ref = as_image(reference, name="reference")
    rows = np.flatnonzero(ref.any(axis=1))
    cols = np.flatnonzero(ref.any(axis=0))
    if rows.size == 0:
        raise ValueError("reference image is empty")
    crop = ref[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    return np.pad(crop, margin)


def _wrap_shift(d: int, n: int) -> int:
    d %= n
    return d - n if d > n // 2 else d


def register_by_reference(recons: Sequence, reference_template,
                          min_peak: float = MIN_REGISTRATION_PEAK) -> Registration:
    """Locate the shared reference in every channel; shifts are relative to channel 0."""
    if not recons:
        raise ValueError("no reconstructions to register")
    peaks, positions = [], []
    for r in recons:
        peak, pos = match_template(r, reference_template)
        peaks.append(peak)
        positions.append(pos)
    h, w = np.shape(recons[0])
    p0 = positions[0]
    shifts = [(_wrap_shift(p[0] - p0[0], h), _wrap_shift(p[1] - p0[1], w)) for p in positions]
    return Registration(shifts, positions, peaks, [p >= min_peak for p in peaks])


def _int_shift(s) -> tuple[int, int]:
    dy, dx = s
    if int(dy) != dy or int(dx) != dx:
        raise ValueError(f"shifts must be integer translations, got {s}")
    return int(dy), int(dx)


def align(image: np.ndarray, shift) -> np.ndarray:
    """Undo a channel's translation (integer circular shift, nothing else)."""
    dy, dx = _int_shift(shift)
    return np.roll(np.asarray(image, dtype=np.float64), (-dy, -dx), axis=(0, 1))


@dataclass(frozen=True)
class CompositeImage:
    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    shifts: tuple[tuple[int, int], ...]
    gains: tuple[float, ...]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    def save(self, path) -> None:
        write_rgb8(path, self.rgb)


def composite_rgb(recons: Sequence, shifts: Optional[Sequence] = None,
                  gains: Optional[Sequence[float]] = None) -> CompositeImage:
    """Stack three channel images (R, G, B order) into one jointly normalized RGB image."""
    if len(recons) != 3 or any(r is None for r in recons):
        raise ValueError("composite_rgb needs exactly three channels ordered R, G, B")
    shifts = [(0, 0)] * 3 if shifts is None else [_int_shift(s) for s in shifts]
    gains = [1.0] * 3 if gains is None else [float(g) for g in gains]
    if len(shifts) != 3 or len(gains) != 3:
        raise ValueError("need one shift and one gain per channel")
    planes = [align(g * as_image(r, name="channel"), s) for r, s, g in zip(recons, shifts, gains)]
    rgb = np.stack(planes, axis=-1)
    peak = rgb.max()
    if peak > 0:
        rgb = rgb / peak
    return CompositeImage(rgb, tuple(shifts), tuple(gains))


@dataclass(frozen=True)
class SpectralCube:
    planes: np.ndarray  # (K, H, W), registered, ascending wavelength
    wavelengths_nm: tuple[float, ...]
    shifts: tuple[tuple[int, int], ...]  # relative to the shortest wavelength
    gains: tuple[float, ...]

    @property
    def depth(self) -> int:
        return self.planes.shape[0]

    def manifest(self, files: Sequence[str] = (), scale: float | None = None) -> dict:
        return {
            "wavelengths_nm": list(self.wavelengths_nm),
            "shifts": [list(s) for s in self.shifts],
            "gains": list(self.gains),
            "files": list(files),
            "scale": scale,
        }

    def save(self, directory, stem: str = "cube") -> dict:
        """One 16-bit PNG per plane on a shared scale, plus ``<stem>.json``."""
        directory = Path(directory)
        scale = float(self.planes.max()) if self.planes.size else 1.0
        files = []
        for wl, plane in zip(self.wavelengths_nm, self.planes):
            name = f"{stem}_{wl:g}nm.png"
            write_gray16(directory / name, plane, scale)
            files.append(name)
        man = self.manifest(files, scale)
        write_json(directory / f"{stem}.json", man)
        return man


def build_spectral_cube(recons: Sequence, wavelengths: Sequence[float],
                        shifts: Optional[Sequence] = None,
                        gains: Optional[Sequence[float]] = None) -> SpectralCube:
    """Registered per-wavelength stack sorted by wavelength.

    Shifts are re-referenced to the shortest-wavelength plane, so any
    permutation of the inputs (with matching labels) yields the same cube.
    """
    k = len(recons)
    if k < 1:
        raise ValueError("cube needs at least one plane")
    if len(wavelengths) != k:
        raise ValueError(f"{len(wavelengths)} wavelengths for {k} planes")
    if len(set(float(w) for w in wavelengths)) != k:
        raise ValueError("wavelengths must be unique")
    shifts = [(0, 0)] * k if shifts is None else [_int_shift(s) for s in shifts]
    gains = [1.0] * k if gains is None else [float(g) for g in gains]
    if len(shifts) != k or len(gains) != k:
        raise ValueError("need one shift and one gain per plane")
    order = sorted(range(k), key=lambda i: float(wavelengths[i]))
    base = shifts[order[0]]
    rel = [(shifts[i][0] - base[0], shifts[i][1] - base[1]) for i in order]
    planes = np.stack([align(gains[i] * as_image(recons[i], name="plane"), r) for i, r in zip(order, rel)])
    return SpectralCube(planes, tuple(float(wavelengths[i]) for i in order), tuple(rel),
                        tuple(gains[i] for i in order))
