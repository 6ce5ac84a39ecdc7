"""Orchestration behind the command-line tools.

Each ``run_*`` function takes a validated :class:`RunConfig` and an output
directory, writes its files and returns an exit status. Files that must be
reproducible (images, manifests, reports) contain no wall-clock data; run
times go to ``timings.json`` and the comparison CSV only.
"""
from __future__ import annotations

import csv
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bispectrum import write_phase_csv
from .color import (Channel, ChannelStack, build_spectral_cube, calibrate_channels, composite_rgb,
                    flux_scaled, reconstruct_channels, reference_template, register_by_reference)
from .config import ConfigError, RunConfig, render
from .forward import (NoiseParams, PsfModel, SceneSpec, derive_seed, gen_speckle_psf,
                      simulate_channels, simulate_speckle)
from .io import read_gray, read_json, write_gray16, write_json
from .objects import square
from .pipeline import hio_speckle, reconstruct_speckle, truth_on_grid

REPORT_SCHEMA = "specklecolor.report/1"
MANIFEST_SCHEMA = "specklecolor.manifest/1"
COMPARE_SCHEMA = "specklecolor.compare/1"
COMPARE_COLUMNS = ("method", "seed", "ncc", "orientation_ok", "runtime_ms")

EXIT_OK, EXIT_HARD, EXIT_PARTIAL = 0, 1, 2

# sub-stream labels for derive_seed(run_seed, label)
NOISE_STREAM = 1000
CALIBRATION_PSF_STREAM = 2000
CALIBRATION_NOISE_STREAM = 3000
HIO_STREAM = 4000


def _tag(wl: float) -> str:
    return f"{wl:g}nm"


def _jsonable(x):
    """Convert numpy scalars and containers to plain JSON types."""
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def _centroid(img: np.ndarray) -> list[float]:
    total = img.sum()
    if total <= 0:
        return [0.0, 0.0]
    yy, xx = np.indices(img.shape)
    return [float((yy * img).sum() / total), float((xx * img).sum() / total)]


# ---------------------------------------------------------------- simulate

def scene_arrays(cfg: RunConfig):
    """Render the configured scene: per-channel objects and the reference image."""
    if cfg.scene is None:
        raise ConfigError("this command needs a 'scene' section")
    sc = cfg.scene
    base = None if cfg.base_dir is None else Path(cfg.base_dir)
    objs = [render(ch.objects, sc.canvas, base) for ch in sc.channels]
    ref = render(sc.reference, sc.canvas, base) if sc.reference else None
    return objs, ref


def psf_seeds(cfg: RunConfig) -> list[int]:
    return [ch.psf_seed if ch.psf_seed is not None else derive_seed(cfg.seed, c)
            for c, ch in enumerate(cfg.scene.channels)]


def _noise_seed(cfg: RunConfig, stream: int) -> int:
    n = cfg.scene.noise
    return derive_seed(n.seed if n.seed is not None else cfg.seed, stream)


def run_simulate(cfg: RunConfig, out) -> int:
    """Write speckles, PSFs, ground truth, calibration frames and ``manifest.json``."""
    out = Path(out)
    sc = cfg.scene
    objs, ref = scene_arrays(cfg)
    wls = [ch.wavelength_nm for ch in sc.channels]
    gains = [ch.gain for ch in sc.channels]
    seeds = psf_seeds(cfg)
    spec = SceneSpec(objs, wls, ref, sc.grid, sc.aperture_radius, gains, sc.noise.photon_scale,
                     sc.noise.read_noise_sigma, _noise_seed(cfg, NOISE_STREAM))
    stack, psfs = simulate_channels(spec, seeds, return_psfs=True)
    truths = [spec.channel_object(c) for c in range(len(wls))]

    out.mkdir(parents=True, exist_ok=True)
    speckle_scale = max(float(ch.speckle.max()) for ch in stack.channels)
    truth_scale = max(float(t.max()) for t in truths)
    entries = []
    for c, (wl, ch, psf, truth) in enumerate(zip(wls, stack.channels, psfs, truths)):
        tag = _tag(wl)
        write_gray16(out / f"speckle_{tag}.png", ch.speckle, speckle_scale)
        write_gray16(out / f"psf_{tag}.png", psf)
        write_gray16(out / f"truth_{tag}.png", truth, truth_scale)
        entries.append({
            "wavelength_nm": wl,
            "speckle": f"speckle_{tag}.png",
            "psf": f"psf_{tag}.png",
            "truth": f"truth_{tag}.png",
            "psf_seed": seeds[c],
            "gain": gains[c],
            "objects": list(sc.channels[c].objects),
            "centroid": _centroid(truth),
        })

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "version": __version__,
        "seed": cfg.seed,
        "canvas": sc.canvas,
        "grid": sc.grid,
        "aperture_radius": sc.aperture_radius,
        "speckle_scale": speckle_scale,
        "truth_scale": truth_scale,
        "channels": entries,
        "reference": list(sc.reference),
        "reference_template": None,
        "calibration": [],
    }
    if ref is not None:
        write_gray16(out / "reference.png", ref)
        write_gray16(out / "reference_template.png", reference_template(ref))
        manifest["reference_template"] = "reference_template.png"

    if sc.calibration_frames:
        flat = np.zeros((sc.canvas, sc.canvas))
        side = max(2, sc.canvas // 4)
        flat[(sc.canvas - side) // 2:(sc.canvas - side) // 2 + side,
             (sc.canvas - side) // 2:(sc.canvas - side) // 2 + side] = square(side)
        cal_spec = SceneSpec([flat] * len(wls), wls, None, sc.grid, sc.aperture_radius, gains,
                             sc.noise.photon_scale, sc.noise.read_noise_sigma,
                             _noise_seed(cfg, CALIBRATION_NOISE_STREAM))
        cal_seeds = [derive_seed(cfg.seed, CALIBRATION_PSF_STREAM + c) for c in range(len(wls))]
        cal = simulate_channels(cal_spec, cal_seeds)
        cal_scale = max(float(ch.speckle.max()) for ch in cal.channels)
        for wl, ch in zip(wls, cal.channels):
            name = f"calib_{_tag(wl)}.png"
            write_gray16(out / name, ch.speckle, cal_scale)
            manifest["calibration"].append(name)

    write_json(out / "manifest.json", _jsonable(manifest))
    return EXIT_OK


# ------------------------------------------------------------- reconstruct

def _load_inputs(cfg: RunConfig):
    """Resolve speckle, calibration, template and truth paths from the config."""
    inp = cfg.inputs
    if inp is None:
        raise ConfigError("this command needs an 'inputs' section")
    if inp.manifest is not None:
        man_path = cfg.resolve(inp.manifest)
        man = read_json(man_path)
        if man.get("schema") != MANIFEST_SCHEMA:
            raise ConfigError(f"{man_path}: not a {MANIFEST_SCHEMA} manifest")
        d = man_path.parent
        chans = [(float(e["wavelength_nm"]), d / e["speckle"]) for e in man["channels"]]
        cal = [d / p for p in man.get("calibration", [])]
        tpl = d / man["reference_template"] if man.get("reference_template") else None
        truths = [d / e["truth"] for e in man["channels"] if e.get("truth")]
        truths = truths if len(truths) == len(chans) else None
    else:
        if not inp.channels:
            raise ConfigError("inputs: give a manifest or at least one channel")
        chans = [(c.wavelength_nm, cfg.resolve(c.path)) for c in inp.channels]
        cal = [cfg.resolve(p) for p in inp.calibration]
        tpl = cfg.resolve(inp.reference_template) if inp.reference_template else None
        truths = None
    if cal and len(cal) != len(chans):
        raise ConfigError("need one calibration frame per channel")
    return chans, cal, tpl, truths


def _channel_record(wl: float, name: str, res) -> dict:
    d = res.diagnostics
    rec = {"wavelength_nm": wl, "status": "failed" if "error" in d else "ok",
           "output": None if "error" in d else name}
    for key in ("error", "error_code", "warning", "clamp_energy_fraction",
                "amplitude_clamp_fraction", "phase_coverage", "flux", "ncc_flipped"):
        if key in d:
            rec[key] = d[key]
    rec["ncc"] = res.quality
    rec["orientation_ok"] = res.orientation_ok
    return rec


def run_reconstruct(cfg: RunConfig, out, workers: int = 1, dump_phase: bool = False) -> int:
    """Reconstruct every channel; write images, composite, cube and ``report.json``.

    Returns 0 if every channel succeeded, 2 if some failed and 1 if all did.
    """
    out = Path(out)
    t_start = time.perf_counter()
    chans, cal_paths, tpl_path, truth_paths = _load_inputs(cfg)
    images = [read_gray(p) for _, p in chans]
    stack = ChannelStack([Channel(wl, im) for (wl, _), im in zip(chans, images)])
    params = cfg.params

    gains = [1.0] * len(stack)
    if cal_paths:
        cal = ChannelStack([Channel(wl, read_gray(p)) for (wl, _), p in zip(chans, cal_paths)])
        gains = [float(g) for g in calibrate_channels(cal)]
    template = read_gray(tpl_path) if tpl_path is not None else None
    truths = None
    if truth_paths is not None:
        truths = [truth_on_grid(read_gray(p), params.tile_side) for p in truth_paths]
    t_load = time.perf_counter()

    results = reconstruct_channels(stack, params, truths, workers=workers, keep_slices=dump_phase)
    t_recon = time.perf_counter()

    out.mkdir(parents=True, exist_ok=True)
    records = []
    for (wl, _), res in zip(chans, results):
        name = f"recon_{_tag(wl)}.png"
        rec = _channel_record(wl, name, res)
        if rec["status"] == "ok":
            write_gray16(out / name, res.image, 1.0)
            if dump_phase:
                write_phase_csv(res.diagnostics["slices"], out / f"phase_{_tag(wl)}.csv")
                rec["phase_csv"] = f"phase_{_tag(wl)}.csv"
        records.append(rec)
    ok = [i for i, r in enumerate(records) if r["status"] == "ok"]

    shifts = [(0, 0)] * len(stack)
    registration = {"mode": "none", "shifts": [list(s) for s in shifts]}
    registration_failed = False
    if template is not None and len(ok) >= 2:
        reg = register_by_reference([results[i].image for i in ok], template)
        for i, s in zip(ok, reg.shifts):
            shifts[i] = s
        registration = {"mode": "reference", "shifts": [list(s) for s in shifts],
                        "peaks": {_tag(chans[i][0]): p for i, p in zip(ok, reg.peaks)},
                        "registered": {_tag(chans[i][0]): r for i, r in zip(ok, reg.registered)}}
        registration_failed = not reg.all_registered
    t_reg = time.perf_counter()

    scaled = [flux_scaled(r) for r in results]
    composite = None
    if len(stack) == 3 and len(ok) == 3:
        order = sorted(range(3), key=lambda i: -chans[i][0])  # R, G, B = long to short
        comp = composite_rgb([scaled[i] for i in order], [shifts[i] for i in order],
                             [gains[i] for i in order])
        comp.save(out / "composite.png")
        composite = {"file": "composite.png", "order_nm": [chans[i][0] for i in order]}
    cube = None
    if ok:
        cube_obj = build_spectral_cube([scaled[i] for i in ok], [chans[i][0] for i in ok],
                                       [shifts[i] for i in ok], [gains[i] for i in ok])
        cube = cube_obj.save(out / "cube", "cube")
        cube["directory"] = "cube"
    t_end = time.perf_counter()

    if not ok:
        code = EXIT_HARD
    elif len(ok) < len(stack) or registration_failed:
        code = EXIT_PARTIAL
    else:
        code = EXIT_OK
    report = {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "config": cfg.to_dict(),
        "inputs": [{"wavelength_nm": wl, "file": Path(p).name} for wl, p in chans],
        "channels": records,
        "calibration": {"source": "frames" if cal_paths else "none", "gains": gains},
        "registration": registration,
        "composite": composite,
        "cube": cube,
        "exit_code": code,
    }
    write_json(out / "report.json", _jsonable(report))
    timings = {"load_s": t_load - t_start, "reconstruct_s": t_recon - t_load,
               "register_s": t_reg - t_recon, "compose_s": t_end - t_reg, "total_s": t_end - t_start,
               "channels": {_tag(wl): r.diagnostics.get("timings_s") for (wl, _), r in zip(chans, results)}}
    write_json(out / "timings.json", _jsonable(timings))
    return code


# ----------------------------------------------------------------- compare

def compare_rows(cfg: RunConfig, workers: int = 1) -> list[dict]:
    """Triple correlation and HIO on the first channel's object, one PSF per seed."""
    objs, ref = scene_arrays(cfg)
    sc = cfg.scene
    obj = objs[0] if ref is None else objs[0] + ref
    params = cfg.params
    truth = truth_on_grid(obj, params.tile_side)
    rows = []
    for s in cfg.compare.seeds:
        run_seed = cfg.seed + s
        psf = gen_speckle_psf(PsfModel(derive_seed(run_seed, 0), sc.grid, sc.aperture_radius))
        noise = None
        if sc.noise.photon_scale is not None:
            noise = NoiseParams(sc.noise.photon_scale, sc.noise.read_noise_sigma,
                                derive_seed(run_seed, NOISE_STREAM))
        speckle = simulate_speckle(obj, psf, noise)
        t0 = time.perf_counter()
        tc = reconstruct_speckle(speckle, params, truth, workers=workers)
        rows.append({"method": "tc", "seed": s, "ncc": tc.quality, "orientation_ok": tc.orientation_ok,
                     "runtime_ms": (time.perf_counter() - t0) * 1e3})
        if cfg.compare.run_hio:
            t0 = time.perf_counter()
            hio = hio_speckle(speckle, params, derive_seed(run_seed, HIO_STREAM), truth)
            rows.append({"method": "hio", "seed": s, "ncc": hio.quality,
                         "orientation_ok": hio.orientation_ok,
                         "runtime_ms": (time.perf_counter() - t0) * 1e3})
    return rows


def _summary(rows: list[dict]) -> dict:
    out = {}
    for method in sorted({r["method"] for r in rows}):
        sel = [r for r in rows if r["method"] == method]
        upright = sum(bool(r["orientation_ok"]) for r in sel)
        out[method] = {"runs": len(sel), "upright": upright, "flipped": len(sel) - upright,
                       "mean_ncc": float(np.mean([r["ncc"] for r in sel])),
                       "min_ncc": float(np.min([r["ncc"] for r in sel]))}
    return out


def run_compare(cfg: RunConfig, out, workers: int = 1) -> int:
    """Write ``compare.csv`` (with run times) and ``compare.json`` (without)."""
    out = Path(out)
    rows = compare_rows(cfg, workers)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "compare.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COMPARE_COLUMNS)
        writer.writeheader()
        for r in rows:
            writer.writerow({**r, "ncc": f"{r['ncc']:.6f}", "orientation_ok": str(r["orientation_ok"]).lower(),
                             "runtime_ms": f"{r['runtime_ms']:.1f}"})
    stable = [{k: v for k, v in r.items() if k != "runtime_ms"} for r in rows]
    write_json(out / "compare.json", _jsonable({"schema": COMPARE_SCHEMA, "version": __version__,
                                                "config": cfg.to_dict(), "rows": stable,
                                                "summary": _summary(rows)}))
    write_json(out / "timings.json", _jsonable({"runtime_ms": [r["runtime_ms"] for r in rows]}))
    return EXIT_OK


def reconstruct_from_manifest(manifest_path, out, seed: int = 0, workers: int = 1,
                              overrides: Optional[dict] = None) -> int:
    """Convenience wrapper: reconstruct the output of :func:`run_simulate`."""
    d = {"seed": seed, "inputs": {"manifest": str(Path(manifest_path).resolve())}}
    if overrides:
        d.update(overrides)
    return run_reconstruct(RunConfig.from_dict(d), out, workers)
