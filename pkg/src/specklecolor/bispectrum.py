"""Fourier-phase retrieval by spatially averaged triple correlation.

The speckle image is cut into overlapping windowed tiles. For every angle each
tile is Radon-projected, the 1D bispectrum ``B(u, v) = F(u) F(v) F*(u + v)`` of
the projection is formed and the complex bispectra are averaged over tiles.
Because the averaged speckle transfer term is real, the phase of the mean
bispectrum is the object's bispectrum phase, from which the 1D Fourier phase
follows by recursion. By the central-slice theorem the 1D phases are radial
slices of the 2D phase, which :func:`assemble_phase` puts back on a grid.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .spectral import ComplexSpectrum, RadialSignal, as_image, central_slice, projection_matrix

# tile and angle blocking is fixed so reductions never depend on worker count
TILE_BLOCK = 32
ANGLE_BLOCK = 8


@dataclass(frozen=True)
class TileSpec:
    tile_side: int
    overlap_fraction: float = 0.9

    def __post_init__(self):
        if self.tile_side < 4 or self.tile_side % 2:
            raise ValueError(f"tile_side must be even and >= 4, got {self.tile_side}")
        if not 0.0 <= self.overlap_fraction <= 0.95:
            raise ValueError(f"overlap_fraction must lie in [0, 0.95], got {self.overlap_fraction}")
        if self.stride < 1:
            raise ValueError("stride < 1")

    @property
    def stride(self) -> int:
        return int(round(self.tile_side * (1.0 - self.overlap_fraction)))

    def counts(self, shape: tuple[int, int]) -> tuple[int, int]:
        """Tiles along (rows, columns) for an image of ``shape``."""
        h, w = shape
        if self.tile_side > min(h, w):
            raise ValueError(f"tile_side {self.tile_side} exceeds image {shape}")
        return (h - self.tile_side) // self.stride + 1, (w - self.tile_side) // self.stride + 1


@dataclass(frozen=True)
class TileSet:
    tiles: np.ndarray  # (M, T, T), mean-subtracted and windowed
    origins: np.ndarray  # (M, 2) top-left (row, col), raster order
    spec: TileSpec

    def __len__(self) -> int:
        return self.tiles.shape[0]


def tile_window(side: int) -> np.ndarray:
    """Separable periodic Hann window peaking at the tile center."""
    w = 0.5 * (1.0 - np.cos(2 * np.pi * np.arange(side) / side))
    return np.outer(w, w)


def tile(speckle, spec: TileSpec, window: bool = True) -> TileSet:
    img = as_image(speckle, name="speckle")
    ny, nx = spec.counts(img.shape)
    t, s = spec.tile_side, spec.stride
    origins = np.array([(i * s, j * s) for i in range(ny) for j in range(nx)], dtype=np.int64)
    view = np.lib.stride_tricks.sliding_window_view(img, (t, t))[::s, ::s][:ny, :nx]
    tiles = view.reshape(ny * nx, t, t).copy()
    tiles -= tiles.mean(axis=(1, 2), keepdims=True)
    if window:
        tiles *= tile_window(t)
    return TileSet(tiles, origins, spec)


def tiles_from_images(images: Iterable[np.ndarray], window: bool = True) -> TileSet:
    """Build a TileSet from independent, equally sized square images."""
    tiles = np.stack([as_image(im) for im in images]).astype(np.float64)
    side = tiles.shape[-1]
    tiles -= tiles.mean(axis=(1, 2), keepdims=True)
    if window:
        tiles *= tile_window(side)
    return TileSet(tiles, np.zeros((len(tiles), 2), dtype=np.int64), TileSpec(side, 0.0))


@lru_cache(maxsize=16)
def triangle(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs ``(u, v)`` with ``1 <= u <= v`` and ``u + v <= n // 2``."""
    half = n // 2
    u, v = [], []
    for uu in range(1, half // 2 + 1):
        for vv in range(uu, half - uu + 1):
            u.append(uu)
            v.append(vv)
    return np.array(u, dtype=np.int64), np.array(v, dtype=np.int64)


@dataclass(frozen=True)
class BispectrumSlice:
    """Bispectrum of one radial signal (or the tile average of many).

    ``values[u, v]`` is populated on the triangular domain only; everything
    else is zero.
    """

    angle: float
    values: np.ndarray  # (n//2 + 1, n//2 + 1) complex
    accumulation_count: int = 1

    @property
    def n(self) -> int:
        return 2 * (self.values.shape[0] - 1)


def _triangle_products(spectra: np.ndarray, n: int) -> np.ndarray:
    u, v = triangle(n)
    return spectra[..., u] * spectra[..., v] * np.conj(spectra[..., u + v])


def _to_dense(tri: np.ndarray, n: int) -> np.ndarray:
    u, v = triangle(n)
    dense = np.zeros((n // 2 + 1, n // 2 + 1), dtype=np.complex128)
    dense[u, v] = tri
    return dense


def slice_bispectrum(signal) -> BispectrumSlice:
    """Bispectrum of a real 1D signal on the triangular domain."""
    if isinstance(signal, RadialSignal):
        angle, data = signal.angle, np.asarray(signal.bins)
    else:
        angle, data = 0.0, np.asarray(signal)
    if np.iscomplexobj(data):
        raise ValueError("slice_bispectrum expects a real signal")
    n = data.shape[-1]
    if n < 4 or n % 2:
        raise ValueError(f"signal length must be even and >= 4, got {n}")
    spectrum = np.fft.fft(data.astype(np.float64))
    return BispectrumSlice(float(angle), _to_dense(_triangle_products(spectrum, n), n), 1)


def _accumulate_block(tiles: np.ndarray, angles: tuple[float, ...], n_bins: int) -> np.ndarray:
    """Tile-summed triangle bispectra for one block of angles, shape (A, D)."""
    m, t, _ = tiles.shape
    mat = projection_matrix((t, t), angles, n_bins)
    flat = tiles.reshape(m, t * t)
    total = np.zeros((len(angles), len(triangle(n_bins)[0])), dtype=np.complex128)
    for start in range(0, m, TILE_BLOCK):
        block = flat[start:start + TILE_BLOCK]
        proj = (mat @ block.T).T.reshape(len(block), len(angles), n_bins)
        spectra = np.fft.fft(proj, axis=-1)
        total += _triangle_products(spectra, n_bins).sum(axis=0)
    return total


def accumulate_bispectra(tiles: TileSet, angles: Sequence[float], n_bins: int | None = None,
                         workers: int = 1) -> list[BispectrumSlice]:
    """Tile-averaged bispectrum per angle.

    Work is split into fixed angle blocks of ``ANGLE_BLOCK`` and tile blocks of
    ``TILE_BLOCK`` (raster order), so the floating-point summation order and
    hence the result are identical for any ``workers``.
    """
    if len(tiles) < 1:
        raise ValueError("need at least one tile")
    angles = tuple(float(a) for a in angles)
    if not angles:
        raise ValueError("need at least one angle")
    n_bins = tiles.tiles.shape[-1] if n_bins is None else int(n_bins)
    if n_bins < 4 or n_bins % 2:
        raise ValueError(f"n_bins must be even and >= 4, got {n_bins}")
    blocks = [angles[i:i + ANGLE_BLOCK] for i in range(0, len(angles), ANGLE_BLOCK)]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sums = list(pool.map(lambda b: _accumulate_block(tiles.tiles, b, n_bins), blocks))
    else:
        sums = [_accumulate_block(tiles.tiles, b, n_bins) for b in blocks]
    m = len(tiles)
    out = []
    for block, total in zip(blocks, sums):
        for angle, tri in zip(block, total):
            out.append(BispectrumSlice(angle, _to_dense(tri / m, n_bins), m))
    return out


@dataclass(frozen=True)
class RadialPhaseSlice:
    angle: float
    phase: np.ndarray  # radians, l = 0 .. n/2
    confidence: np.ndarray  # in [0, 1]


def recover_slice_phase(b: BispectrumSlice) -> RadialPhaseSlice:
    """Phase recursion with the gauge ``phi(0) = phi(1) = 0``.

    For each ``l >= 2`` every split ``l = u + v`` (``u <= v``) predicts
    ``phi(u) + phi(v) - beta(u, v)``; predictions are combined as unit phasors
    weighted by ``|B(u, v)|``. ``confidence(l)`` is the resultant length of that
    weighted mean.
    """
    vals = np.asarray(b.values)
    half = vals.shape[0] - 1
    mag = np.abs(vals)
    beta = np.angle(vals)
    phase = np.zeros(half + 1)
    conf = np.zeros(half + 1)
    conf[:2] = 1.0
    for l in range(2, half + 1):
        u = np.arange(1, l // 2 + 1)
        v = l - u
        w = mag[u, v]
        total = w.sum()
        if total > 0:
            z = np.sum(w * np.exp(1j * (phase[u] + phase[v] - beta[u, v])))
            phase[l] = np.angle(z)
            conf[l] = abs(z) / total
        else:
            phase[l] = 2 * phase[l - 1] - phase[l - 2]
            conf[l] = 0.0
    return RadialPhaseSlice(b.angle, phase, conf)


@dataclass(frozen=True)
class PhaseGrid:
    phase: np.ndarray  # DC-centered radians
    mask: np.ndarray  # bool, bins covered by slices

    @property
    def coverage(self) -> float:
        return float(self.mask.mean())


def antisymmetrize(phasor: np.ndarray) -> np.ndarray:
    """Average ``z(k)`` with ``conj(z(-k))`` on a DC-centered even grid.

    The first row and column (frequency -N/2) have no partner on the grid and
    are zeroed.
    """
    out = np.zeros_like(phasor)
    core = phasor[1:, 1:]
    out[1:, 1:] = 0.5 * (core + np.conj(core[::-1, ::-1]))
    return out


def assemble_phase(slices: Sequence[RadialPhaseSlice], grid_side: int,
                   radius: float = 1.0) -> PhaseGrid:
    """Place radial phase slices on a DC-centered Cartesian grid.

    Sample ``l`` of a slice at angle ``a`` sits at ``l (cos a, sin a)`` with its
    phase, and at the opposite point with the negated phase. Each grid bin takes
    the phasor mean of all samples closer than ``radius`` bins, weighted by
    ``confidence / distance`` (an exact hit wins outright). Bins with no such
    sample are masked. Antisymmetry is then enforced in the phasor domain.
    """
    if len(slices) < 2:
        raise ValueError("assemble_phase needs at least two slices")
    if len({round(float(s.angle) % np.pi, 12) for s in slices}) < 2:
        raise ValueError("assemble_phase needs slices at distinct angles")
    if grid_side < 4 or grid_side % 2:
        raise ValueError("grid_side must be even and >= 4")
    c = grid_side // 2
    acc = np.zeros((grid_side, grid_side), dtype=np.complex128)
    wsum = np.zeros((grid_side, grid_side))
    exact_acc = np.zeros_like(acc)
    exact_hit = np.zeros((grid_side, grid_side), dtype=bool)
    reach = int(math.ceil(radius))
    offsets = [(dy, dx) for dy in range(-reach, reach + 1) for dx in range(-reach, reach + 1)]
    for sl in slices:
        phase = np.asarray(sl.phase)
        conf = np.asarray(sl.confidence)
        l = np.arange(len(phase), dtype=np.float64)
        ca, sa = math.cos(sl.angle), math.sin(sl.angle)
        for sign in (1.0, -1.0):
            px = c + sign * l * ca
            py = c + sign * l * sa
            z = conf * np.exp(1j * sign * phase)
            bx0, by0 = np.rint(px).astype(int), np.rint(py).astype(int)
            for dy, dx in offsets:
                bx, by = bx0 + dx, by0 + dy
                d = np.hypot(bx - px, by - py)
                ok = (d < radius) & (bx >= 0) & (bx < grid_side) & (by >= 0) & (by < grid_side)
                hit = ok & (d < 1e-9)
                near = ok & ~hit
                np.add.at(exact_acc, (by[hit], bx[hit]), z[hit])
                exact_hit[by[hit], bx[hit]] = True
                np.add.at(acc, (by[near], bx[near]), z[near] / d[near])
                np.add.at(wsum, (by[near], bx[near]), conf[near] / d[near])
    phasor = np.where(exact_hit, exact_acc, acc)
    covered = exact_hit | (wsum > 0)
    phasor = antisymmetrize(np.where(covered, phasor, 0))
    mask = np.zeros_like(covered)
    mask[1:, 1:] = covered[1:, 1:] | covered[1:, 1:][::-1, ::-1]
    phase = np.where(mask & (np.abs(phasor) > 0), np.angle(phasor), 0.0)
    phase[c, c] = 0.0
    return PhaseGrid(phase, mask)


def _circular_centroid(weights: np.ndarray, positions: np.ndarray, n: int) -> float:
    z = np.sum(weights * np.exp(2j * np.pi * positions / n))
    return float(np.angle(z) * n / (2 * np.pi)) if abs(z) > 0 else 0.0


def recenter_slices(slices: Sequence[RadialPhaseSlice], amplitude: np.ndarray,
                    window: float = 0.2) -> list[RadialPhaseSlice]:
    """Re-reference every slice's linear phase ramp to the projection centroid.

    The gauge ``phi(1) = 0`` fixes each slice's translation independently, and
    noise in the low-order recursion turns that into a different shift per
    angle, which smears the assembled image. Each slice is combined with the
    amplitude along the same line, inverse transformed to a 1D projection and
    shifted so that its centroid sits at the origin. The centroid is first
    located coarsely from the squared positive part and then refined from the
    positive part within ``window * n`` bins of it; for noiseless data the
    refined centroid is the projection of the 2D centroid, so all slices agree
    on one translation.
    """
    amp = np.asarray(amplitude, dtype=np.float64)
    spectrum = ComplexSpectrum(amp.astype(np.complex128), dc_centered=True)
    out = []
    for sl in slices:
        phase = np.asarray(sl.phase, dtype=np.float64)
        half = len(phase) - 1
        n = 2 * half
        mod = np.fft.ifftshift(np.abs(central_slice(spectrum, sl.angle, n).bins))
        full = np.zeros(n, dtype=np.complex128)
        full[:half + 1] = mod[:half + 1] * np.exp(1j * phase)
        full[half + 1:] = np.conj(full[1:half][::-1])
        proj = np.clip(np.fft.ifft(full).real, 0.0, None)
        t = np.arange(n, dtype=np.float64)
        coarse = _circular_centroid(proj**2, t, n)
        d = (t - coarse + n / 2) % n - n / 2
        centre = coarse + _circular_centroid(proj * (np.abs(d) <= window * n), d, n)
        l = np.arange(half + 1)
        shifted = np.angle(np.exp(1j * (phase + 2 * np.pi * l * centre / n)))
        out.append(RadialPhaseSlice(sl.angle, shifted, sl.confidence))
    return out


def retrieve_phase(speckle, spec: TileSpec, angle_count: int = 64, workers: int = 1,
                   radius: float = 1.0, amplitude: np.ndarray | None = None):
    """Tile, accumulate, recurse and assemble; returns ``(PhaseGrid, slices)``.

    With ``amplitude`` (DC-centered, ``tile_side`` square) the slices are
    passed through :func:`recenter_slices` before assembly; the returned
    slices are the raw recursion output either way.
    """
    tiles = tile(speckle, spec)
    angles = np.arange(angle_count) * np.pi / angle_count
    bispectra = accumulate_bispectra(tiles, angles, spec.tile_side, workers=workers)
    slices = [recover_slice_phase(b) for b in bispectra]
    placed = slices if amplitude is None else recenter_slices(slices, amplitude)
    return assemble_phase(placed, spec.tile_side, radius), slices


def write_phase_csv(slices: Sequence[RadialPhaseSlice], path) -> None:
    """Dump recovered slices as ``angle,l,phase,confidence`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["angle", "l", "phase", "confidence"])
        for sl in slices:
            for l, (p, c) in enumerate(zip(sl.phase, sl.confidence)):
                writer.writerow([repr(float(sl.angle)), l, repr(float(p)), repr(float(c))])
