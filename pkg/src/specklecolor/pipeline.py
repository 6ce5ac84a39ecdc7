"""Monochrome speckle-to-image pipeline."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .amplitude import estimate_amplitude
from .bispectrum import TileSpec, retrieve_phase
from .objects import centered
from .reconstruct import ReconstructionResult, hio_reconstruct, reconstruct


@dataclass(frozen=True)
class PipelineParams:
    tile_side: int = 128
    overlap_fraction: float = 0.9
    angle_count: int = 64
    crop_radius: Optional[int] = None  # defaults to the object support bound, tile_side // 2
    taper: float = 0.5
    assembly_radius: float = 2.0
    hio_iterations: int = 2000
    hio_feedback: float = 0.9
    recenter: bool = True

    def __post_init__(self):
        TileSpec(self.tile_side, self.overlap_fraction)
        if self.angle_count < 2:
            raise ValueError("angle_count must be >= 2")
        if self.crop_radius is not None and not 2 <= self.crop_radius <= self.tile_side // 2:
            raise ValueError("crop_radius must lie in [2, tile_side / 2]")
        if not 0 <= self.taper <= 1:
            raise ValueError("taper must lie in [0, 1]")
        if self.assembly_radius <= 0:
            raise ValueError("assembly_radius must be positive")
        if self.hio_iterations < 1 or not 0 < self.hio_feedback <= 1:
            raise ValueError("invalid HIO parameters")

    @property
    def support(self) -> int:
        """Object support bound (pixels); shared by the autocorrelation crop and HIO."""
        return self.crop_radius if self.crop_radius is not None else self.tile_side // 2

    @property
    def tile_spec(self) -> TileSpec:
        return TileSpec(self.tile_side, self.overlap_fraction)


def truth_on_grid(obj: np.ndarray, side: int) -> np.ndarray:
    """Ground-truth object embedded in a reconstruction-sized grid."""
    obj = np.asarray(obj, dtype=np.float64)
    if obj.shape[0] > side or obj.shape[1] > side:
        rows = np.flatnonzero(obj.any(axis=1))
        cols = np.flatnonzero(obj.any(axis=0))
        obj = obj[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    return centered(obj, side)


def reconstruct_speckle(speckle, params: PipelineParams = PipelineParams(), truth=None,
                        workers: int = 1, keep_slices: bool = False) -> ReconstructionResult:
    """Amplitude from the autocorrelation, phase from averaged bispectra."""
    t0 = time.perf_counter()
    amp = estimate_amplitude(speckle, params.support, params.tile_side, params.taper)
    t1 = time.perf_counter()
    phase, slices = retrieve_phase(speckle, params.tile_spec, params.angle_count, workers,
                                   params.assembly_radius,
                                   amp.amplitude if params.recenter else None)
    t2 = time.perf_counter()
    result = reconstruct(amp, phase, truth)
    result.diagnostics["timings_s"] = {"amplitude": t1 - t0, "phase": t2 - t1,
                                       "reconstruct": time.perf_counter() - t2}
    if amp.warning:
        result.diagnostics["warning"] = amp.warning
    if keep_slices:
        result.diagnostics["slices"] = slices
    return result


def hio_speckle(speckle, params: PipelineParams = PipelineParams(), seed: int = 0,
                truth=None) -> ReconstructionResult:
    amp = estimate_amplitude(speckle, params.support, params.tile_side, params.taper)
    return hio_reconstruct(amp, params.support / 2, params.hio_iterations, params.hio_feedback,
                           seed, truth)
