"""Point-mass plant with first-order velocity lag and command saturation.

The plant is ``p' = v``, ``v' = -tau (v - v_c)`` with ``|v_c| <= v_max``. Steps
use the exact zero-order-hold solution so large ``tau`` is not stiff.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .geometry import Projection, ProjectionError, Vec2, VirtualTube, project

V_FLOOR = 0.05
GRID_STEP = 0.05
V_INIT = 2.0

TRACE_COLUMNS = ["l", "t", "x", "y", "vx", "vy", "pace", "e_norm", "cmd_x", "cmd_y", "v_star"]


@dataclass(frozen=True)
class PlantParams:
    tau: float
    v_max: float
    dt: float = 0.01

    def __post_init__(self):
        for name in ("tau", "v_max", "dt"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0.0):
                raise ValueError(f"plant parameter {name} must be positive and finite, got {val}")


class DroneState(NamedTuple):
    p: Vec2
    v: Vec2
    t: float = 0.0


class Outcome(str, enum.Enum):
    FINISHED = "finished"
    TUBE_EXIT = "tube_exit"
    TIMEOUT = "timeout"
    PROJECTION_LOST = "projection_lost"


Controller = Callable[[DroneState, Projection], Vec2]


def saturate(v_prime, v_max: float) -> tuple[Vec2, float]:
    """Scale ``v_prime`` onto the ball of radius ``v_max``; returns ``(v_c, kappa)``."""
    n = math.hypot(v_prime[0], v_prime[1])
    if n <= v_max:
        return Vec2(v_prime[0], v_prime[1]), 1.0
    kappa = v_max / n
    return Vec2(v_prime[0] * kappa, v_prime[1] * kappa), kappa


def step(state: DroneState, v_c, params: PlantParams) -> DroneState:
    """Advance one control period holding ``v_c`` constant."""
    decay = math.exp(-params.tau * params.dt)
    gain = -math.expm1(-params.tau * params.dt) / params.tau
    dvx = state.v[0] - v_c[0]
    dvy = state.v[1] - v_c[1]
    p = Vec2(state.p[0] + v_c[0] * params.dt + dvx * gain, state.p[1] + v_c[1] * params.dt + dvy * gain)
    v = Vec2(v_c[0] + dvx * decay, v_c[1] + dvy * decay)
    return DroneState(p, v, state.t + params.dt)


def tangential_pace(state: DroneState, proj: Projection, v_floor: float = V_FLOOR) -> float:
    """Rate of progress ``dl/dt`` along the centerline, floored at ``v_floor``.

    The along-tangent velocity is divided by ``1 - K d`` (``d`` = signed left
    offset from the centerline), which is the exact rate at which the foot point
    moves; on straight sections this is just ``v . t_c``.
    """
    t = proj.tangent
    vt = state.v[0] * t[0] + state.v[1] * t[1]
    if proj.signed_curvature != 0.0:
        # left offset of the drone: cross(t, p - m) = -cross(t, e_p)
        d_left = -(t[0] * proj.e_p[1] - t[1] * proj.e_p[0])
        vt /= 1.0 - proj.signed_curvature * d_left
    return max(vt, v_floor)


@dataclass(frozen=True)
class LapTrace:
    """One lap resampled on a uniform arclength grid.

    Arrays cover the grid up to the furthest arclength reached; for a finished
    lap that is all of ``[0, L]``. ``dv_ratio`` is ``|v - v_c| / pace``, the
    empirical counterpart of the bounded-perturbation assumption.
    """

    l: np.ndarray
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    pace: np.ndarray
    e_norm: np.ndarray
    cmd_x: np.ndarray
    cmd_y: np.ndarray
    dv_ratio: np.ndarray
    lap_time: float
    outcome: Outcome
    l_end: float
    length: float
    grid_step: float

    @property
    def finished(self) -> bool:
        return self.outcome is Outcome.FINISHED

    @property
    def n_steps(self) -> int:
        return int(round(self.lap_time / (self.t[1] - self.t[0]))) if len(self.t) > 1 else 0

    def space_domain_time(self) -> float:
        """Trapezoidal integral of ``dl / pace`` over the recorded grid."""
        return float(np.trapezoid(1.0 / self.pace, self.l))

    def to_csv(self, path, v_star=None) -> None:
        n = len(self.l)
        vs = np.full(n, np.nan) if v_star is None else np.asarray(v_star, dtype=float)[:n]
        cols = [self.l, self.t, self.x, self.y, self.vx, self.vy, self.pace, self.e_norm, self.cmd_x, self.cmd_y, vs]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(TRACE_COLUMNS)
            for row in zip(*cols):
                w.writerow([f"{v:.9g}" for v in row])


def arclength_grid(length: float, step: float = GRID_STEP) -> np.ndarray:
    n = max(int(round(length / step)), 1)
    return np.linspace(0.0, length, n + 1)


def start_state(tube: VirtualTube, v_init: float = V_INIT) -> DroneState:
    p0 = tube.curve.point(0.0)
    t0 = tube.curve.tangent(0.0)
    return DroneState(p0, Vec2(t0.x * v_init, t0.y * v_init), 0.0)


def run_lap(
    tube: VirtualTube,
    controller: Controller,
    params: PlantParams,
    t_max: float = 120.0,
    v_init: float = V_INIT,
    grid_step: float = GRID_STEP,
    v_floor: float = V_FLOOR,
    window: float = 5.0,
) -> LapTrace:
    """Fly one lap from the start of the tube under ``controller``.

    The lap ends when the drone's arclength reaches ``L`` (lap time is
    interpolated at the crossing), when it leaves the tube, when projection is
    lost, or when ``t_max`` elapses. Non-finishing outcomes are returned, not
    raised.
    """
    if not v_init > 0.0:
        raise ValueError("v_init must be positive")
    L = tube.length
    closed = tube.closed
    state = start_state(tube, v_init)
    end_pt = tube.curve.point(L) if not closed else None
    end_tan = tube.curve.tangent(L) if not closed else None

    rec_l, rec_t, rec_x, rec_y, rec_vx, rec_vy = [], [], [], [], [], []
    rec_pace, rec_e, rec_cx, rec_cy, rec_dv = [], [], [], [], []
    l_prev = 0.0  # unwrapped progress
    outcome = Outcome.TIMEOUT
    lap_time = math.nan
    l_end = 0.0

    while True:
        try:
            proj = project(tube, state.p, l_prev % L if closed else l_prev, window)
        except ProjectionError:
            outcome, l_end = Outcome.PROJECTION_LOST, l_prev
            break
        l = proj.l
        if closed:
            l += L * round((l_prev - l) / L)
        elif l >= L - 1e-12:
            # past the finish plane of an open tube: extend along the end tangent
            l = L + max((state.p[0] - end_pt.x) * end_tan.x + (state.p[1] - end_pt.y) * end_tan.y, 0.0)
        e_norm = math.hypot(proj.e_p[0], proj.e_p[1])
        pace = tangential_pace(state, proj, v_floor)

        if l >= L and rec_l:
            # crossing between the previous sample and this one
            l0, t0 = rec_l[-1], rec_t[-1]
            frac = (L - l0) / (l - l0) if l > l0 else 1.0
            lap_time = t0 + frac * (state.t - t0)
            outcome, l_end = Outcome.FINISHED, L
            _record(rec_l, rec_t, rec_x, rec_y, rec_vx, rec_vy, rec_pace, rec_e, rec_cx, rec_cy, rec_dv,
                    l, state, pace, e_norm, rec_cx[-1], rec_cy[-1], rec_dv[-1])
            break
        if e_norm > proj.radius:
            outcome, l_end = Outcome.TUBE_EXIT, max(l, l_prev)
            break
        if state.t > t_max:
            outcome, l_end = Outcome.TIMEOUT, max(l, l_prev)
            break

        v_c = controller(state, proj)
        dv = math.hypot(state.v[0] - v_c[0], state.v[1] - v_c[1]) / pace
        if not rec_l or l > rec_l[-1]:
            _record(rec_l, rec_t, rec_x, rec_y, rec_vx, rec_vy, rec_pace, rec_e, rec_cx, rec_cy, rec_dv,
                    l, state, pace, e_norm, v_c[0], v_c[1], dv)
        l_prev = max(l_prev, l)
        state = step(state, v_c, params)

    return _resample(
        tube, outcome, lap_time, l_end, grid_step,
        rec_l, rec_t, rec_x, rec_y, rec_vx, rec_vy, rec_pace, rec_e, rec_cx, rec_cy, rec_dv,
    )


def _record(rl, rt, rx, ry, rvx, rvy, rp, re, rcx, rcy, rdv, l, state, pace, e_norm, cx, cy, dv):
    rl.append(l)
    rt.append(state.t)
    rx.append(state.p[0])
    ry.append(state.p[1])
    rvx.append(state.v[0])
    rvy.append(state.v[1])
    rp.append(pace)
    re.append(e_norm)
    rcx.append(cx)
    rcy.append(cy)
    rdv.append(dv)


def _resample(tube, outcome, lap_time, l_end, grid_step, *records) -> LapTrace:
    L = tube.length
    grid = arclength_grid(L, grid_step)
    ls = np.asarray(records[0])
    reach = min(ls[-1], L) if len(ls) else 0.0
    g = grid[grid <= reach + 1e-12] if outcome is not Outcome.FINISHED else grid
    cols = [np.interp(g, ls, np.asarray(r)) for r in records[1:]]
    return LapTrace(g, *cols, lap_time=lap_time, outcome=outcome, l_end=float(l_end), length=L,
                    grid_step=float(grid[1] - grid[0]) if len(grid) > 1 else L)
