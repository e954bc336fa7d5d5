"""Spatial ILC command law and the iteration-to-iteration profile update.

The command is ``sat(v_h + v_p)`` where ``v_h = v * v_star(l) * t_c`` sets the
pace and ``v_p = k0(l) * v * e_p`` pulls the drone back to the centerline.
Between laps the pace multiplier ``v_star`` follows a PD-type learning law
through a two-slope activation ``chi``.

``v_star`` is a per-location multiplier on the current pace: a value of one
holds speed, larger values accelerate, smaller ones brake.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import V_FLOOR, DroneState, saturate, tangential_pace
from .geometry import Projection, Vec2


class AlignmentError(ValueError):
    """Profiles that should share an arclength grid do not."""


@dataclass(frozen=True)
class IlcParams:
    """Gains of the command law and learning law.

    ``k2`` is in 1/m; ``k3`` and ``k4`` are dimensionless so that
    ``k0 = k2 + k3*K + k4/r_t`` is in 1/m.
    """

    k_p: float = 2.0
    k_d: float = 1.2
    k2: float = 2.0
    k3: float = 30.0
    k4: float = 0.3
    x_th: float = 0.45
    chi_alpha: float = 0.4
    chi_beta: float = 2.0
    v_star_init: float = 1.0
    v_star_cap: float = 50.0

    def __post_init__(self):
        for name, val in self.__dict__.items():
            if not (math.isfinite(val) and val > 0.0):
                raise ValueError(f"ILC parameter {name} must be positive, got {val}")
        if self.chi_alpha > self.chi_beta:
            raise ValueError("chi_alpha must not exceed chi_beta")
        if self.v_star_init > self.v_star_cap:
            raise ValueError("v_star_init exceeds v_star_cap")

    @property
    def steady_error(self) -> float:
        """Error level at which the learning law stops changing the profile."""
        return self.x_th / self.k_p


@dataclass(frozen=True)
class SpeedProfile:
    grid: np.ndarray
    v_star: np.ndarray
    k: int = 0

    def __post_init__(self):
        if self.grid.shape != self.v_star.shape or len(self.grid) < 2:
            raise AlignmentError("profile grid and values must be equal-length arrays")
        object.__setattr__(self, "_step", float(self.grid[1] - self.grid[0]))
        object.__setattr__(self, "_values", self.v_star.tolist())

    @classmethod
    def uniform(cls, grid: np.ndarray, value: float) -> "SpeedProfile":
        return cls(np.asarray(grid, dtype=float), np.full(len(grid), float(value)), 0)

    def at(self, l: float) -> float:
        """Linear interpolation on the uniform grid; clamped at both ends."""
        x = l / self._step
        vals = self._values
        i = int(x)
        if i < 0:
            return vals[0]
        if i >= len(vals) - 1:
            return vals[-1]
        f = x - i
        return vals[i] + f * (vals[i + 1] - vals[i])


@dataclass(frozen=True)
class ErrorProfile:
    grid: np.ndarray
    e_norm: np.ndarray
    de_norm: np.ndarray

    @classmethod
    def from_samples(cls, grid, e_norm, smooth: int = 5) -> "ErrorProfile":
        """Build the profile, estimating the spatial derivative.

        ``|e_p|`` is smoothed with a centred moving average of ``smooth``
        samples (shrinking at the ends), then differentiated by central
        differences (one-sided at the ends).
        """
        grid = np.asarray(grid, dtype=float)
        e = np.asarray(e_norm, dtype=float)
        if len(grid) != len(e):
            raise AlignmentError("error samples do not match the grid")
        if len(e) < 2:
            return cls(grid, e, np.zeros_like(e))
        es = _moving_average(e, smooth)
        de = np.gradient(es, grid)
        return cls(grid, e, de)


def _moving_average(x: np.ndarray, width: int) -> np.ndarray:
    if width <= 1 or len(x) < 3:
        return x.copy()
    half = width // 2
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(len(x))
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, len(x))
    return (c[hi] - c[lo]) / (hi - lo)


def gain_k0(curvature: float, r_t: float, params: IlcParams) -> float:
    return params.k2 + params.k3 * curvature + params.k4 / r_t


def path_convergence(proj: Projection, pace: float, params: IlcParams) -> Vec2:
    g = gain_k0(proj.curvature, proj.radius, params) * pace
    return Vec2(g * proj.e_p[0], g * proj.e_p[1])


def pace_command(proj: Projection, profile: SpeedProfile, pace: float) -> Vec2:
    g = pace * profile.at(proj.l)
    return Vec2(g * proj.tangent[0], g * proj.tangent[1])


def command(
    state: DroneState,
    proj: Projection,
    profile: SpeedProfile,
    params: IlcParams,
    v_max: float,
    v_floor: float = V_FLOOR,
) -> Vec2:
    """Saturated sum of the pace and path-convergence terms."""
    pace = tangential_pace(state, proj, v_floor)
    vh = pace_command(proj, profile, pace)
    vp = path_convergence(proj, pace, params)
    return saturate((vh[0] + vp[0], vh[1] + vp[1]), v_max)[0]


class IlcController:
    """Callable command law bound to one speed profile, for :func:`run_lap`."""

    def __init__(self, profile: SpeedProfile, params: IlcParams, v_max: float, v_floor: float = V_FLOOR):
        self.profile = profile
        self.params = params
        self.v_max = v_max
        self.v_floor = v_floor

    def __call__(self, state: DroneState, proj: Projection) -> Vec2:
        return command(state, proj, self.profile, self.params, self.v_max, self.v_floor)


def chi(x, params: IlcParams):
    """Two-slope activation through ``(x_th, 0)``: gentle below, steep above."""
    d = np.asarray(x, dtype=float) - params.x_th
    out = np.where(d > 0.0, params.chi_beta * d, params.chi_alpha * d)
    return float(out) if np.ndim(out) == 0 else out


def update_profile(profile: SpeedProfile, errors: ErrorProfile, params: IlcParams, mask=None) -> SpeedProfile:
    """One learning step ``v* <- v* - chi(k_p |e| + k_d d|e|/dl)``, clamped.

    ``mask`` selects the samples to update (all by default); the rest keep
    their previous values.
    """
    if len(errors.grid) != len(profile.grid) or not np.allclose(errors.grid, profile.grid, rtol=0, atol=1e-9):
        raise AlignmentError("error profile grid does not match the speed profile grid")
    arg = params.k_p * errors.e_norm + params.k_d * errors.de_norm
    new = profile.v_star - chi(arg, params)
    if mask is not None:
        new = np.where(mask, new, profile.v_star)
    new = np.clip(new, 0.0, params.v_star_cap)
    return replace(profile, v_star=new, k=profile.k + 1)
