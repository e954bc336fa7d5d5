"""Track and parameter files (YAML), with strict key checking.

Track file::

    name: square
    closed: true
    corner_radius: 5.0
    tube_radius: 1.0            # or [[l, r_t], ...] breakpoints
    waypoints: [[0, 0], [20, 0], [20, 20], [0, 20]]

Parameter file sections: ``plant``, ``ilc``, ``learning``, ``dp``, ``compare``
and ``sweep``. Every section and every key is optional; unknown ones are
rejected.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from .baseline import DpConfig
from .controller import IlcParams
from .dynamics import PlantParams
from .geometry import GeometryError, VirtualTube, build_tube
from .learner import LearningConfig

TRACK_KEYS = {"name", "closed", "corner_radius", "tube_radius", "waypoints"}
BUNDLED_TRACKS = ("straight", "circle", "square", "scurve", "soccer")
DEFAULT_TAUS = (1.0, 5.0, 10.0, 30.0)
DEFAULT_PLANT = {"tau": 5.0, "v_max": 4.0, "dt": 0.01}


class ConfigError(ValueError):
    """A track or parameter file is malformed; the message names the field."""


def _read_yaml(path) -> dict:
    if not os.path.isfile(path):
        raise ConfigError(f"file not found: {path}")
    with open(path) as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _check_keys(data: dict, allowed, where: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(str, unknown))}")


def _number(val, where: str) -> float:
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {val!r}")
    return float(val)


def bundled_track_path(name: str) -> str:
    return str(resources.files("spatial_ilc") / "tracks" / f"{name}.yaml")


def default_params_path() -> str:
    return str(resources.files("spatial_ilc") / "params" / "default.yaml")


def resolve_track(ref: str) -> str:
    """A bundled track name or a path to a track file."""
    if ref in BUNDLED_TRACKS and not os.path.exists(ref):
        return bundled_track_path(ref)
    return ref


def parse_track(data: dict, where: str = "track") -> VirtualTube:
    _check_keys(data, TRACK_KEYS, where)
    for key in ("waypoints", "corner_radius", "tube_radius"):
        if key not in data:
            raise ConfigError(f"{where}: missing key {key}")
    wps = data["waypoints"]
    if not isinstance(wps, list) or not all(isinstance(p, list) and len(p) == 2 for p in wps):
        raise ConfigError(f"{where}.waypoints: expected a list of [x, y] pairs")
    pts = [(_number(x, f"{where}.waypoints"), _number(y, f"{where}.waypoints")) for x, y in wps]
    corner = _number(data["corner_radius"], f"{where}.corner_radius")
    rt = data["tube_radius"]
    if isinstance(rt, list):
        if not all(isinstance(b, list) and len(b) == 2 for b in rt):
            raise ConfigError(f"{where}.tube_radius: expected [[l, r_t], ...] breakpoints")
        radius = [(_number(l, f"{where}.tube_radius"), _number(r, f"{where}.tube_radius")) for l, r in rt]
    else:
        radius = _number(rt, f"{where}.tube_radius")
    closed = data.get("closed", False)
    if not isinstance(closed, bool):
        raise ConfigError(f"{where}.closed: expected true or false")
    name = str(data.get("name", "track"))
    try:
        return build_tube(pts, corner, radius, closed=closed, name=name)
    except (GeometryError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_track(ref: str) -> VirtualTube:
    path = resolve_track(ref)
    return parse_track(_read_yaml(path), where=path)


def _grid(start: float, stop: float, num: int, log: bool = False) -> tuple[float, ...]:
    fn = np.geomspace if log else np.linspace
    return tuple(float(v) for v in fn(start, stop, num).round(12))


@dataclass(frozen=True)
class SweepRanges:
    """Grid for the closed-form arc ratio surface."""

    x_th: tuple[float, ...] = field(default_factory=lambda: _grid(0.1, 1.0, 10))
    k_p: tuple[float, ...] = field(default_factory=lambda: _grid(0.5, 5.0, 10))
    r: tuple[float, ...] = field(default_factory=lambda: _grid(2.0, 200.0, 9, log=True))
    L: float = 10.0
    k_prime: float = 1.0
    v_max: float = 4.0
    lam: float | None = None  # defaults to the smallest x_th / k_p on the grid

    def __post_init__(self):
        for name in ("x_th", "k_p", "r"):
            vals = getattr(self, name)
            if not vals or any(not (math.isfinite(v) and v > 0.0) for v in vals):
                raise ConfigError(f"sweep.{name}: values must be positive")
        for name in ("L", "k_prime", "v_max"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"sweep.{name}: must be positive")
        if self.lam is not None and not self.lam > 0.0:
            raise ConfigError("sweep.lam: must be positive")

    @property
    def lam_value(self) -> float:
        if self.lam is not None:
            return self.lam
        return min(x / k for x in self.x_th for k in self.k_p)


def _range(val, where: str) -> tuple[float, ...]:
    """Either an explicit list or ``{start, stop, num[, log]}``."""
    if isinstance(val, list):
        return tuple(_number(v, where) for v in val)
    if isinstance(val, dict):
        _check_keys(val, {"start", "stop", "num", "log"}, where)
        try:
            start, stop, num = _number(val["start"], where), _number(val["stop"], where), int(val["num"])
        except KeyError as exc:
            raise ConfigError(f"{where}: missing key {exc.args[0]}") from None
        if num < 1:
            raise ConfigError(f"{where}.num: must be at least 1")
        if start <= 0.0 or stop <= 0.0:
            raise ConfigError(f"{where}: values must be positive")
        return _grid(start, stop, num, bool(val.get("log", False)))
    raise ConfigError(f"{where}: expected a list or a start/stop/num mapping")


@dataclass(frozen=True)
class Params:
    plant: PlantParams = field(default_factory=lambda: PlantParams(**DEFAULT_PLANT))
    ilc: IlcParams = field(default_factory=IlcParams)
    learning: LearningConfig = field(default_factory=LearningConfig)
    dp: DpConfig = field(default_factory=DpConfig)
    taus: tuple[float, ...] = DEFAULT_TAUS
    sweep: SweepRanges = field(default_factory=SweepRanges)


def _section(cls, data, where: str, defaults: dict | None = None):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    _check_keys(data, names, where)
    kwargs = dict(defaults or {})
    for key, val in data.items():
        ftype = next(f.type for f in dataclasses.fields(cls) if f.name == key)
        if ftype in ("int", int):
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"{where}.{key}: expected an integer, got {val!r}")
            kwargs[key] = val
        elif ftype in ("bool", bool):
            if not isinstance(val, bool):
                raise ConfigError(f"{where}.{key}: expected true or false")
            kwargs[key] = val
        else:
            kwargs[key] = _number(val, f"{where}.{key}")
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_params(data: dict, where: str = "params") -> Params:
    _check_keys(data, {"plant", "ilc", "learning", "dp", "compare", "sweep"}, where)
    compare = data.get("compare") or {}
    if not isinstance(compare, dict):
        raise ConfigError(f"{where}.compare: expected a mapping")
    _check_keys(compare, {"taus"}, f"{where}.compare")
    taus = compare.get("taus", list(DEFAULT_TAUS))
    if not isinstance(taus, list):
        raise ConfigError(f"{where}.compare.taus: expected a list")
    taus = tuple(_number(t, f"{where}.compare.taus") for t in taus)
    if any(t <= 0.0 for t in taus):
        raise ConfigError(f"{where}.compare.taus: values must be positive")

    sweep = data.get("sweep") or {}
    if not isinstance(sweep, dict):
        raise ConfigError(f"{where}.sweep: expected a mapping")
    _check_keys(sweep, {f.name for f in dataclasses.fields(SweepRanges)}, f"{where}.sweep")
    kw = {}
    for key, val in sweep.items():
        if key in ("x_th", "k_p", "r"):
            kw[key] = _range(val, f"{where}.sweep.{key}")
        else:
            kw[key] = _number(val, f"{where}.sweep.{key}")

    return Params(
        plant=_section(PlantParams, data.get("plant"), f"{where}.plant", DEFAULT_PLANT),
        ilc=_section(IlcParams, data.get("ilc"), f"{where}.ilc"),
        learning=_section(LearningConfig, data.get("learning"), f"{where}.learning"),
        dp=_section(DpConfig, data.get("dp"), f"{where}.dp"),
        taus=taus,
        sweep=SweepRanges(**kw),
    )


def load_params(path: str | None = None) -> Params:
    path = path or default_params_path()
    return parse_params(_read_yaml(path), where=path)
