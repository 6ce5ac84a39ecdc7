"""Run configuration: JSON in, validated dataclasses out.

Every section rejects unknown keys and range-checks its values on load.
``to_dict`` emits the effective configuration with all defaults filled in, and
loading that again gives an equal object.

Example::

    {
      "seed": 3,
      "pipeline": {"tile_side": 128, "overlap_fraction": 0.9, "angle_count": 64},
      "scene": {
        "canvas": 64,
        "channels": [
          {"wavelength_nm": 630, "objects": [{"shape": "glyph", "char": "4", "at": [0, 40]}]},
          {"wavelength_nm": 530, "objects": [{"shape": "glyph", "char": "1", "at": [0, 4]}]}
        ],
        "reference": [{"shape": "ring", "outer": 16, "inner": 8, "at": [44, 24]}]
      }
    }
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .io import read_json
from .objects import build_object, place
from .pipeline import PipelineParams

SHAPE_KEYS = {
    "glyph": {"char", "height"},
    "square": {"size"},
    "ring": {"outer", "inner"},
    "file": {"path"},
}
COMMON_KEYS = {"shape", "at", "value"}


class ConfigError(ValueError):
    pass


def _check_keys(data, allowed, where: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed {sorted(allowed)}")
    return data


def _fields(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)) and not (isinstance(v, float) and v.is_integer()):
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    return int(v)


def _float(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    v = float(v)
    if not np.isfinite(v):
        raise ConfigError(f"{where}: must be finite")
    return v


@dataclass(frozen=True)
class PipelineConfig:
    tile_side: int = 128
    overlap_fraction: float = 0.9
    angle_count: int = 64
    crop_radius: Optional[int] = None
    taper: float = 0.5
    assembly_radius: float = 2.0
    recenter: bool = True

    @classmethod
    def from_dict(cls, d: dict, where: str = "pipeline") -> "PipelineConfig":
        _check_keys(d, _fields(cls), where)
        kw = {}
        for k in ("tile_side", "angle_count"):
            if k in d:
                kw[k] = _int(d[k], f"{where}.{k}")
        if d.get("crop_radius") is not None:
            kw["crop_radius"] = _int(d["crop_radius"], f"{where}.crop_radius")
        for k in ("overlap_fraction", "taper", "assembly_radius"):
            if k in d:
                kw[k] = _float(d[k], f"{where}.{k}")
        if "recenter" in d:
            _require(isinstance(d["recenter"], bool), f"{where}.recenter must be true or false")
            kw["recenter"] = d["recenter"]
        cfg = cls(**kw)
        _require(cfg.tile_side >= 8 and cfg.tile_side % 2 == 0, f"{where}.tile_side must be even and >= 8")
        _require(0.0 <= cfg.overlap_fraction <= 0.95, f"{where}.overlap_fraction must lie in [0, 0.95]")
        _require(2 <= cfg.angle_count <= 1024, f"{where}.angle_count must lie in [2, 1024]")
        _require(0.0 <= cfg.taper <= 1.0, f"{where}.taper must lie in [0, 1]")
        _require(0.0 < cfg.assembly_radius <= 4.0, f"{where}.assembly_radius must lie in (0, 4]")
        if cfg.crop_radius is not None:
            _require(2 <= cfg.crop_radius <= cfg.tile_side // 2,
                     f"{where}.crop_radius must lie in [2, tile_side / 2]")
        return cfg


@dataclass(frozen=True)
class HioConfig:
    iterations: int = 2000
    feedback: float = 0.9

    @classmethod
    def from_dict(cls, d: dict, where: str = "hio") -> "HioConfig":
        _check_keys(d, _fields(cls), where)
        cfg = cls(_int(d.get("iterations", 2000), f"{where}.iterations"),
                  _float(d.get("feedback", 0.9), f"{where}.feedback"))
        _require(1 <= cfg.iterations <= 100000, f"{where}.iterations must lie in [1, 100000]")
        _require(0.0 < cfg.feedback <= 1.0, f"{where}.feedback must lie in (0, 1]")
        return cfg


@dataclass(frozen=True)
class NoiseConfig:
    photon_scale: Optional[float] = None  # None disables noise
    read_noise_sigma: float = 0.0
    seed: Optional[int] = None  # None derives from the run seed

    @classmethod
    def from_dict(cls, d: dict, where: str = "noise") -> "NoiseConfig":
        _check_keys(d, _fields(cls), where)
        ps = d.get("photon_scale")
        ps = None if ps is None else _float(ps, f"{where}.photon_scale")
        seed = d.get("seed")
        seed = None if seed is None else _int(seed, f"{where}.seed")
        cfg = cls(ps, _float(d.get("read_noise_sigma", 0.0), f"{where}.read_noise_sigma"), seed)
        _require(cfg.photon_scale is None or cfg.photon_scale > 0, f"{where}.photon_scale must be > 0")
        _require(cfg.read_noise_sigma >= 0, f"{where}.read_noise_sigma must be >= 0")
        return cfg


def _element(d: dict, where: str) -> dict:
    _check_keys(d, COMMON_KEYS | set().union(*SHAPE_KEYS.values()), where)
    shape = d.get("shape")
    _require(shape in SHAPE_KEYS, f"{where}.shape must be one of {sorted(SHAPE_KEYS)}")
    _check_keys(d, COMMON_KEYS | SHAPE_KEYS[shape], where)
    out = {"shape": shape}
    if shape == "glyph":
        _require(isinstance(d.get("char"), str) and len(d["char"]) == 1, f"{where}.char must be one character")
        out["char"] = d["char"]
        out["height"] = _int(d.get("height", 32), f"{where}.height")
        _require(5 <= out["height"] <= 256, f"{where}.height must lie in [5, 256]")
    elif shape == "square":
        out["size"] = _int(d["size"], f"{where}.size") if "size" in d else None
        _require(out["size"] is not None and out["size"] >= 1, f"{where}.size must be >= 1")
    elif shape == "ring":
        _require("outer" in d and "inner" in d, f"{where}: ring needs outer and inner")
        out["outer"] = _int(d["outer"], f"{where}.outer")
        out["inner"] = _int(d["inner"], f"{where}.inner")
        _require(0 <= out["inner"] < out["outer"], f"{where}: ring needs 0 <= inner < outer")
    else:
        _require(isinstance(d.get("path"), str), f"{where}.path must be a string")
        out["path"] = d["path"]
    if d.get("at") is not None:
        at = d["at"]
        _require(isinstance(at, (list, tuple)) and len(at) == 2, f"{where}.at must be [row, col]")
        out["at"] = [_int(at[0], f"{where}.at"), _int(at[1], f"{where}.at")]
    else:
        out["at"] = None
    out["value"] = _float(d.get("value", 1.0), f"{where}.value")
    _require(out["value"] > 0, f"{where}.value must be > 0")
    return out


def render(elements, canvas: int, base: Optional[Path] = None) -> np.ndarray:
    """Draw element descriptions onto a square canvas (``at`` = top-left; default centered)."""
    img = np.zeros((canvas, canvas))
    for el in elements:
        desc = dict(el)
        if desc["shape"] == "file" and base is not None and not Path(desc["path"]).is_absolute():
            desc["path"] = str(base / desc["path"])
        obj = build_object(desc)
        at = el.get("at")
        if at is None:
            at = ((canvas - obj.shape[0]) // 2, (canvas - obj.shape[1]) // 2)
        if at[0] < 0 or at[1] < 0 or at[0] + obj.shape[0] > canvas or at[1] + obj.shape[1] > canvas:
            raise ConfigError(f"element {el} does not fit on the {canvas} px canvas")
        place(img, obj * el.get("value", 1.0), tuple(at))
    return img


@dataclass(frozen=True)
class ChannelConfig:
    wavelength_nm: float
    objects: tuple = ()
    gain: float = 1.0
    psf_seed: Optional[int] = None  # None derives from the run seed

    @classmethod
    def from_dict(cls, d: dict, where: str) -> "ChannelConfig":
        _check_keys(d, _fields(cls), where)
        _require("wavelength_nm" in d, f"{where}.wavelength_nm is required")
        wl = _float(d["wavelength_nm"], f"{where}.wavelength_nm")
        _require(100.0 <= wl <= 3000.0, f"{where}.wavelength_nm must lie in [100, 3000]")
        objs = d.get("objects", [])
        _require(isinstance(objs, list), f"{where}.objects must be a list")
        elements = tuple(_element(o, f"{where}.objects[{i}]") for i, o in enumerate(objs))
        gain = _float(d.get("gain", 1.0), f"{where}.gain")
        _require(gain > 0, f"{where}.gain must be > 0")
        seed = d.get("psf_seed")
        seed = None if seed is None else _int(seed, f"{where}.psf_seed")
        return cls(wl, elements, gain, seed)


@dataclass(frozen=True)
class SceneConfig:
    channels: tuple = ()
    reference: tuple = ()
    canvas: int = 64
    grid: int = 512
    aperture_radius: float = 0.11
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    calibration_frames: bool = True

    @classmethod
    def from_dict(cls, d: dict, where: str = "scene") -> "SceneConfig":
        _check_keys(d, _fields(cls), where)
        chans = d.get("channels", [])
        _require(isinstance(chans, list) and len(chans) >= 1, f"{where}.channels needs at least one channel")
        channels = tuple(ChannelConfig.from_dict(c, f"{where}.channels[{i}]") for i, c in enumerate(chans))
        wls = [c.wavelength_nm for c in channels]
        _require(len(set(wls)) == len(wls), f"{where}: channel wavelengths must be unique")
        ref = d.get("reference") or []
        _require(isinstance(ref, list), f"{where}.reference must be a list of elements")
        reference = tuple(_element(o, f"{where}.reference[{i}]") for i, o in enumerate(ref))
        canvas = _int(d.get("canvas", 64), f"{where}.canvas")
        grid = _int(d.get("grid", 512), f"{where}.grid")
        ap = _float(d.get("aperture_radius", 0.11), f"{where}.aperture_radius")
        _require(1 <= canvas <= 4096, f"{where}.canvas must lie in [1, 4096]")
        _require(16 <= grid <= 8192 and grid % 2 == 0, f"{where}.grid must be even and in [16, 8192]")
        _require(0.0 < ap <= 1.0, f"{where}.aperture_radius must lie in (0, 1]")
        noise = NoiseConfig.from_dict(d.get("noise", {}), f"{where}.noise")
        cal = d.get("calibration_frames", True)
        _require(isinstance(cal, bool), f"{where}.calibration_frames must be true or false")
        for i, c in enumerate(channels):
            _require(len(c.objects) + len(reference) > 0, f"{where}.channels[{i}] has no objects")
        return cls(channels, reference, canvas, grid, ap, noise, cal)


@dataclass(frozen=True)
class InputChannel:
    wavelength_nm: float
    path: str

    @classmethod
    def from_dict(cls, d: dict, where: str) -> "InputChannel":
        _check_keys(d, _fields(cls), where)
        _require("wavelength_nm" in d and "path" in d, f"{where} needs wavelength_nm and path")
        _require(isinstance(d["path"], str), f"{where}.path must be a string")
        return cls(_float(d["wavelength_nm"], f"{where}.wavelength_nm"), d["path"])


@dataclass(frozen=True)
class InputsConfig:
    """Where ``reconstruct`` finds its data.

    Either ``manifest`` (written by ``simulate``) or explicit ``channels``;
    ``calibration`` and ``reference_template`` are optional image paths.
    """

    manifest: Optional[str] = None
    channels: tuple = ()
    calibration: tuple = ()
    reference_template: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict, where: str = "inputs") -> "InputsConfig":
        _check_keys(d, _fields(cls), where)
        man = d.get("manifest")
        _require(man is None or isinstance(man, str), f"{where}.manifest must be a path")
        chans = tuple(InputChannel.from_dict(c, f"{where}.channels[{i}]")
                      for i, c in enumerate(d.get("channels", [])))
        _require(man is None or not chans, f"{where}: give either manifest or channels, not both")
        cal = d.get("calibration", [])
        _require(isinstance(cal, list) and all(isinstance(p, str) for p in cal),
                 f"{where}.calibration must be a list of paths")
        _require(not cal or len(cal) == len(chans), f"{where}.calibration needs one frame per channel")
        tpl = d.get("reference_template")
        _require(tpl is None or isinstance(tpl, str), f"{where}.reference_template must be a path")
        return cls(man, chans, tuple(cal), tpl)


@dataclass(frozen=True)
class CompareConfig:
    seeds: tuple = (0,)
    run_hio: bool = True

    @classmethod
    def from_dict(cls, d: dict, where: str = "compare") -> "CompareConfig":
        _check_keys(d, _fields(cls), where)
        seeds = d.get("seeds", [0])
        if isinstance(seeds, int) and not isinstance(seeds, bool):
            _require(seeds >= 1, f"{where}.seeds count must be >= 1")
            seeds = list(range(seeds))
        _require(isinstance(seeds, list) and len(seeds) >= 1, f"{where}.seeds must be a count or a list")
        seeds = tuple(_int(s, f"{where}.seeds") for s in seeds)
        _require(len(set(seeds)) == len(seeds), f"{where}.seeds must be unique")
        hio = d.get("run_hio", True)
        _require(isinstance(hio, bool), f"{where}.run_hio must be true or false")
        return cls(seeds, hio)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    hio: HioConfig = field(default_factory=HioConfig)
    scene: Optional[SceneConfig] = None
    inputs: Optional[InputsConfig] = None
    compare: CompareConfig = field(default_factory=CompareConfig)
    base_dir: Optional[str] = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "RunConfig":
        _check_keys(d, _fields(cls) - {"base_dir"}, "config")
        seed = _int(d.get("seed", 0), "seed")
        _require(0 <= seed < 2**63, "seed must lie in [0, 2^63)")
        scene = d.get("scene")
        inputs = d.get("inputs")
        return cls(
            seed,
            PipelineConfig.from_dict(d.get("pipeline", {})),
            HioConfig.from_dict(d.get("hio", {})),
            None if scene is None else SceneConfig.from_dict(scene),
            None if inputs is None else InputsConfig.from_dict(inputs),
            CompareConfig.from_dict(d.get("compare", {})),
            None if base_dir is None else str(base_dir),
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return _plain(d)

    def with_seed(self, seed: int) -> "RunConfig":
        _require(0 <= seed < 2**63, "seed must lie in [0, 2^63)")
        return dataclasses.replace(self, seed=int(seed))

    def resolve(self, path) -> Path:
        p = Path(path)
        if p.is_absolute() or self.base_dir is None:
            return p
        return Path(self.base_dir) / p

    @property
    def params(self) -> PipelineParams:
        p, h = self.pipeline, self.hio
        return PipelineParams(p.tile_side, p.overlap_fraction, p.angle_count, p.crop_radius, p.taper,
                              p.assembly_radius, h.iterations, h.feedback, p.recenter)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def load_config(path) -> RunConfig:
    path = Path(path)
    return RunConfig.from_dict(read_json(path), base_dir=path.parent)
