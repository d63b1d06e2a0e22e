"""Run configuration: JSON loading, defaults, validation.

A config is a flat JSON object.  Sweep axes are nested objects::

    {"mode": "sweep", "L": 10, "t": 0.1, "U_s": 1.0,
     "delta_abs": 1.0, "kappa": 0.0,
     "sweep": {"param": "U_l", "start": -10, "stop": 30, "count": 41}}

Cavity constants come either explicitly (``G``, ``kappa``, ``delta_tilde``),
in which case they must reproduce ``U_l``, or as ``delta_abs`` + ``kappa``,
in which case ``G`` and the sign of the detuning are derived from ``U_l``
point by point.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from ..meanfield import VARIANTS
from ..model import MAX_SITES, CavityParams, ModelParams

MODES = ("ground", "observables", "sweep", "phase-diagram", "meanfield", "scaling")
SWEEP_PARAMS = ("U_l", "t", "U_s")
NORM_MODES = ("per_pair", "per_site")
PRESET_DIR = Path(__file__).with_name("presets")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class AxisSpec:
    param: str
    start: float = 0.0
    stop: float = 0.0
    count: int = 0
    spacing: str = "linear"
    values: tuple[float, ...] | None = None

    def points(self) -> list[float]:
        if self.values is not None:
            return [float(v) for v in self.values]
        if self.count == 0:
            return []
        if self.count == 1:
            return [float(self.start)]
        if self.spacing == "log":
            return [float(v) for v in np.geomspace(self.start, self.stop, self.count)]
        return [float(v) for v in np.linspace(self.start, self.stop, self.count)]


@dataclass(frozen=True)
class RunConfig:
    mode: str
    L: int = 4
    N: int | None = None
    t: float = 0.1
    U_s: float = 1.0
    U_l: float = 0.0
    G: float | None = None
    kappa: float = 0.0
    delta_tilde: float | None = None
    delta_abs: float = 1.0
    sweep: AxisSpec | None = None
    grid: AxisSpec | None = None
    L_list: tuple[int, ...] = ()
    axis: str = "z"
    bracket: tuple[float, float] | None = None
    scan_count: int = 41
    out_dir: str = "results"
    workers: int = 1
    seed: int = 0
    norm_mode: str = "per_pair"
    n_k: int = 1025
    n_eigs: int = 3
    ncv: int | None = None
    warm_start: bool = True
    damping: float = 0.5
    variant: str = "gauge"
    name: str = ""

    @property
    def n_particles(self) -> int:
        return self.L if self.N is None else self.N

    def cavity_for(self, L: int, U_l: float) -> CavityParams:
        """Cavity constants for one point."""
        if self.G is not None:
            return CavityParams(G=self.G, kappa=self.kappa, delta_tilde=self.delta_tilde)
        return CavityParams.from_U_l(U_l, L, self.delta_abs, self.kappa)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, AxisSpec):
                v = {k: (list(x) if isinstance(x, tuple) else x) for k, x in asdict(v).items() if x is not None}
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


_FIELD_NAMES = {f.name for f in fields(RunConfig)}
_AXIS_KEYS = {f.name for f in fields(AxisSpec)}


def _number(key, value, *, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{key}: must be finite")
    return int(value) if integer else float(value)


def _axis(key, raw) -> AxisSpec:
    if not isinstance(raw, dict):
        raise ConfigError(f"{key}: expected an object")
    unknown = set(raw) - _AXIS_KEYS
    if unknown:
        raise ConfigError(f"{key}.{sorted(unknown)[0]}: unknown key")
    if raw.get("param") not in SWEEP_PARAMS:
        raise ConfigError(f"{key}.param: must be one of {SWEEP_PARAMS}")
    kw = {"param": raw["param"]}
    if "values" in raw:
        if not isinstance(raw["values"], list):
            raise ConfigError(f"{key}.values: expected a list")
        kw["values"] = tuple(_number(f"{key}.values", v) for v in raw["values"])
    for name in ("start", "stop"):
        if name in raw:
            kw[name] = _number(f"{key}.{name}", raw[name])
    if "count" in raw:
        kw["count"] = _number(f"{key}.count", raw["count"], integer=True)
        if kw["count"] < 0:
            raise ConfigError(f"{key}.count: must be >= 0")
    if "spacing" in raw:
        if raw["spacing"] not in ("linear", "log"):
            raise ConfigError(f"{key}.spacing: must be 'linear' or 'log'")
        kw["spacing"] = raw["spacing"]
        if raw["spacing"] == "log" and kw.get("start", 0) * kw.get("stop", 0) <= 0:
            raise ConfigError(f"{key}.spacing: log spacing needs start and stop of one sign")
    return AxisSpec(**kw)


def _check_L(key, L, capped=True):
    if L < 2 or L % 2:
        raise ConfigError(f"{key}: L must be even and >= 2, got {L}")
    if capped and L > MAX_SITES:
        raise ConfigError(f"{key}: L={L} exceeds the cap {MAX_SITES}")


def config_from_dict(raw: dict, **overrides) -> RunConfig:
    """Validate a parsed JSON object; ``overrides`` replace keys after loading."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    raw = dict(raw) | {k: v for k, v in overrides.items() if v is not None}
    unknown = set(raw) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown key")
    if raw.get("mode") not in MODES:
        raise ConfigError(f"mode: must be one of {MODES}, got {raw.get('mode')!r}")

    kw: dict = {"mode": raw["mode"]}
    for key in ("L", "N", "workers", "seed", "n_k", "n_eigs", "scan_count", "ncv"):
        if raw.get(key) is not None:
            kw[key] = _number(key, raw[key], integer=True)
    for key in ("t", "U_s", "U_l", "G", "kappa", "delta_tilde", "delta_abs", "damping"):
        if raw.get(key) is not None:
            kw[key] = _number(key, raw[key])
    for key in ("out_dir", "name"):
        if key in raw:
            if not isinstance(raw[key], str):
                raise ConfigError(f"{key}: expected a string")
            kw[key] = raw[key]
    if "warm_start" in raw:
        if not isinstance(raw["warm_start"], bool):
            raise ConfigError("warm_start: expected true or false")
        kw["warm_start"] = raw["warm_start"]
    for key in ("sweep", "grid"):
        if raw.get(key) is not None:
            kw[key] = _axis(key, raw[key])
    if "L_list" in raw:
        if not isinstance(raw["L_list"], list):
            raise ConfigError("L_list: expected a list")
        kw["L_list"] = tuple(_number("L_list", v, integer=True) for v in raw["L_list"])
    if raw.get("bracket") is not None:
        br = raw["bracket"]
        if not (isinstance(br, list) and len(br) == 2):
            raise ConfigError("bracket: expected [low, high]")
        kw["bracket"] = tuple(_number("bracket", v) for v in br)
    for key, allowed in (("axis", ("z", "x")), ("norm_mode", NORM_MODES), ("variant", VARIANTS)):
        if key in raw:
            if raw[key] not in allowed:
                raise ConfigError(f"{key}: must be one of {allowed}")
            kw[key] = raw[key]

    cfg = RunConfig(**kw)
    _validate(cfg, explicit_cavity="G" in kw or "delta_tilde" in kw)
    return cfg


def _validate(cfg: RunConfig, explicit_cavity: bool):
    # the mean-field problem is single-particle and has no size cap
    _check_L("L", cfg.L, capped=cfg.mode != "meanfield")
    if not 0 <= cfg.n_particles <= 2 * cfg.L:
        raise ConfigError(f"N: must lie in [0, 2L], got {cfg.n_particles}")
    if cfg.workers < 1:
        raise ConfigError("workers: must be >= 1")
    if cfg.n_k < 3:
        raise ConfigError("n_k: need at least 3 k-points")
    if cfg.n_eigs < 1:
        raise ConfigError("n_eigs: must be >= 1")
    if cfg.kappa < 0:
        raise ConfigError("kappa: must be non-negative")
    if cfg.delta_abs <= 0:
        raise ConfigError("delta_abs: must be positive")
    if not 0 < cfg.damping <= 1:
        raise ConfigError("damping: must lie in (0, 1]")
    for L in cfg.L_list:
        _check_L("L_list", L)
    if explicit_cavity:
        if cfg.G is None or cfg.delta_tilde is None:
            raise ConfigError("G: explicit cavity needs G, kappa and delta_tilde together")
        if cfg.sweep is not None and cfg.sweep.param == "U_l":
            raise ConfigError("G: a fixed cavity cannot be combined with a U_l sweep; use delta_abs and kappa")
        try:
            CavityParams(G=cfg.G, kappa=cfg.kappa, delta_tilde=cfg.delta_tilde).check_consistent(
                ModelParams(cfg.L, cfg.n_particles, cfg.t, cfg.U_s, cfg.U_l)
            )
        except ValueError as err:
            raise ConfigError(f"U_l: {err}") from None
    if cfg.mode in ("sweep", "phase-diagram") and cfg.sweep is None:
        raise ConfigError("sweep: required for mode " + cfg.mode)
    if cfg.mode == "phase-diagram" and cfg.grid is None:
        raise ConfigError("grid: required for mode phase-diagram")
    if cfg.mode == "scaling":
        if len(set(cfg.L_list)) < 3:
            raise ConfigError("L_list: scaling needs at least 3 distinct sizes")
        if cfg.bracket is None:
            raise ConfigError("bracket: scaling needs a U_l bracket")
    if cfg.mode == "meanfield" and cfg.U_s != 0:
        raise ConfigError("U_s: the mean-field treatment only covers U_s = 0")


def _parse_json(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{source}: JSON parse error at line {err.lineno}, column {err.colno}: {err.msg}") from None


def resolve_config_path(name_or_path: str) -> Path:
    """A file path, or the name of a shipped preset such as ``fig2-desk``."""
    p = Path(name_or_path)
    if p.is_file():
        return p
    preset = PRESET_DIR / f"{name_or_path}.json"
    if preset.is_file():
        return preset
    raise FileNotFoundError(f"no config file or preset named {name_or_path!r}")


def load_config(path, **overrides) -> RunConfig:
    p = resolve_config_path(str(path))
    return config_from_dict(_parse_json(p.read_text(encoding="utf-8"), str(p)), **overrides)


def list_presets() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.json"))


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw) if kw else cfg
