"""Time-optimal reference values.

Two independent oracles live here:

* :func:`dp_lap_time` -- dynamic programming over ``(arclength, speed)`` for
  the lag plant constrained to the centerline.
* :func:`arc_lap_time` / :func:`arc_optimal_time` -- closed-form steady lap
  times on a constant-curvature arc.

Centerline model used by the DP
-------------------------------
A point moving along the centerline at speed ``v`` with curvature ``K`` needs
``v' = tau (u - v)`` along the tangent and a normal acceleration ``K v**2``,
so the lag plant must be commanded ``v_c = (u, K v**2 / tau)`` in the
tangent/normal frame. The saturation ``|v_c| <= v_max`` then reads

    u**2 + (K v**2 / tau)**2 <= v_max**2

On a steady arc (``u = v``) this is the cornering cap
``v**2 (1 + (K v / tau)**2) <= v_max**2``. Between two grid stations the
tangential command ``u`` is held constant, so each transition ``v0 -> v1``
over ``dl`` is an exact trajectory of the plant; it is admissible when the
bound holds with the larger of the two speeds and the largest curvature met
anywhere on the interval.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .dynamics import V_FLOOR, V_INIT, PlantParams
from .geometry import VirtualTube


class DpInfeasible(RuntimeError):
    """No admissible speed sequence reaches the end of the tube."""


@dataclass(frozen=True)
class DpConfig:
    step: float = 0.1
    n_levels: int = 100
    v_start: float = V_INIT
    v_floor: float = V_FLOOR

    def __post_init__(self):
        if self.n_levels < 50:
            raise ValueError("the speed grid needs at least 50 levels")
        if not self.step > 0.0:
            raise ValueError("arclength step must be positive")
        if not self.v_start > 0.0 or not self.v_floor > 0.0:
            raise ValueError("speeds must be positive")


@dataclass(frozen=True)
class DpResult:
    lap_time: float
    l: np.ndarray
    speed: np.ndarray
    wall_time: float


def cornering_speed(curvature: float, tau: float, v_max: float) -> float:
    """Largest steady speed on an arc: ``v**2 (1 + (K v / tau)**2) = v_max**2``."""
    if curvature == 0.0:
        return v_max
    c = (curvature / tau) ** 2
    # quadratic in w = v**2: c w**2 + w - v_max**2 = 0
    w = 2.0 * v_max**2 / (1.0 + math.sqrt(1.0 + 4.0 * c * v_max**2))
    return math.sqrt(w)


def _transition_times(v0, v1, dl: float, tau: float, iters: int = 60):
    """Duration and constant tangential command taking speed ``v0`` to ``v1`` over ``dl``.

    With ``u`` held, ``v(t) = u + (v0 - u) e^{-tau t}`` and the distance
    satisfies ``u t = dl - (v0 - v1) / tau``. The duration lies between
    ``dl / max(v0, v1)`` and ``dl / min(v0, v1)``; it is found by bisection.
    """
    v0, v1 = np.broadcast_arrays(np.asarray(v0, float), np.asarray(v1, float))
    rhs = dl - (v0 - v1) / tau
    lo = dl / np.maximum(v0, v1)
    hi = dl / np.minimum(v0, v1)
    same = np.abs(v0 - v1) <= 1e-12 * np.maximum(v0, 1.0)

    def residual(t):
        u = (v1 - v0 * np.exp(-tau * t)) / -np.expm1(-tau * t)
        return u * t - rhs

    with np.errstate(invalid="ignore", divide="ignore"):
        r_lo = residual(lo)
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            r_mid = residual(mid)
            left = np.sign(r_mid) == np.sign(r_lo)
            lo = np.where(left, mid, lo)
            r_lo = np.where(left, r_mid, r_lo)
            hi = np.where(left, hi, mid)
        t = 0.5 * (lo + hi)
        u = (v1 - v0 * np.exp(-tau * t)) / -np.expm1(-tau * t)
    t = np.where(same, dl / v0, t)
    u = np.where(same, v0, u)
    return t, u


def _propagate(v0, u, dl: float, tau: float, iters: int = 12):
    """Speed and duration after covering ``dl`` with constant command ``u``.

    Returns ``(t, v1, ok)``; ``ok`` is False where the speed would reach zero
    first. Newton on the distance equation converges monotonically from
    ``t = dl / v0`` because the distance is convex when accelerating and
    concave when braking.
    """
    v0, u = np.broadcast_arrays(np.asarray(v0, float), np.asarray(u, float))
    c = v0 - u
    with np.errstate(invalid="ignore", divide="ignore"):
        t_stop = np.where(u < 0.0, np.log(np.where(u < 0.0, c / -u, 1.0)) / tau, np.inf)
        d_stop = np.where(u < 0.0, u * t_stop + c * -np.expm1(-tau * t_stop) / tau, np.inf)
    ok = d_stop > dl
    t = dl / v0
    for _ in range(iters):
        e = np.exp(-tau * t)
        d = u * t + c * (1.0 - e) / tau - dl
        v = u + c * e
        t = np.where(ok, t - d / np.where(v > 0.0, v, 1.0), t)
    v1 = u + c * np.exp(-tau * t)
    return t, v1, ok


def _max_accel(v0, k: float, v_max: float, dl: float, tau: float, iters: int = 8):
    """Highest speed reachable over ``dl`` under ``u**2 + (k v1**2 / tau)**2 <= v_max**2``."""
    v0 = np.asarray(v0, float)
    v1 = v0.copy()
    for _ in range(iters):
        n = np.minimum(k * np.maximum(v0, v1) ** 2 / tau, v_max)
        u = np.sqrt(v_max**2 - n**2)
        t, v1_new, _ = _propagate(v0, np.maximum(u, v0 * 0.0 + 1e-12), dl, tau)
        if k == 0.0:
            return t, v1_new
        v1 = v1_new
    # the fixed point is approached from above; step down until admissible
    t, u = _transition_times(v0, v1, dl, tau)
    bad = u**2 + (k * np.maximum(v0, v1) ** 2 / tau) ** 2 > v_max**2 * (1.0 + 1e-9)
    while bad.any():
        v1 = np.where(bad, v0 + 0.5 * (v1 - v0), v1)
        t, u = _transition_times(v0, v1, dl, tau)
        bad = (u**2 + (k * np.maximum(v0, v1) ** 2 / tau) ** 2 > v_max**2 * (1.0 + 1e-9)) & (v1 - v0 > 1e-12)
    return t, v1


def _speed_ceiling(kap: np.ndarray, plant: PlantParams, dl: float, v_floor: float) -> np.ndarray:
    """Exact highest speed at each station from which the rest of the lap is admissible.

    Built backwards: a station's ceiling is the largest speed whose hardest
    braking over the next interval lands at or below the next ceiling.
    """
    tau, v_max = plant.tau, plant.v_max
    n = len(kap)
    ceil = np.empty(n + 1)
    ceil[n] = v_max

    def braked(v0, k):
        u = -math.sqrt(max(v_max**2 - (k * v0 * v0 / tau) ** 2, 0.0))
        _, v1, ok = _propagate(np.array([v0]), np.array([u]), dl, tau)
        return float(v1[0]) if ok[0] else 0.0

    for i in range(n - 1, -1, -1):
        k = kap[i]
        top = v_max if k == 0.0 else min(v_max, math.sqrt(v_max * tau / k))
        if braked(top, k) <= ceil[i + 1] + 1e-12:
            ceil[i] = top
            continue
        lo, hi = v_floor, top
        if braked(lo, k) > ceil[i + 1]:
            raise DpInfeasible(f"cannot slow down enough before station {i + 1}")
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if braked(mid, k) <= ceil[i + 1]:
                lo = mid
            else:
                hi = mid
        ceil[i] = lo
    return ceil


def _interval_curvature(tube: VirtualTube, ls: np.ndarray) -> np.ndarray:
    """Largest |curvature| of any segment overlapping each interval ``[ls[i], ls[i+1]]``."""
    curve = tube.curve
    seg_k = np.array([abs(s.signed_curvature) for s in curve.segments])
    starts = np.asarray(curve.starts)
    ends = np.asarray(curve.cumulative_lengths)
    first = np.searchsorted(ends, ls[:-1], side="right")
    last = np.searchsorted(starts, ls[1:], side="left") - 1
    first = np.minimum(first, len(seg_k) - 1)
    last = np.clip(last, first, len(seg_k) - 1)
    return np.array([seg_k[a:b + 1].max() for a, b in zip(first, last)])


def dp_solve(tube: VirtualTube, plant: PlantParams, cfg: DpConfig = DpConfig()) -> DpResult:
    """Minimum-time speed profile along the centerline.

    Backward dynamic programming over stations ``l_i`` spaced ``cfg.step``
    apart. Each station carries ``cfg.n_levels`` speed levels spread between
    ``v_floor`` and that station's exact speed ceiling, so braking curves and
    cornering caps are represented without snapping. From every level two
    kinds of moves are scored: landing exactly on a level of the next station,
    and the hardest admissible acceleration, whose cost-to-go is linearly
    interpolated. The reported lap time comes from rolling the resulting
    policy forward from ``cfg.v_start``, so it is the duration of an actual
    admissible centerline trajectory.
    """
    t0 = time.perf_counter()
    if cfg.v_start > plant.v_max:
        raise ValueError("v_start exceeds v_max")
    tau, v_max = plant.tau, plant.v_max
    L = tube.length
    n = max(int(math.ceil(L / cfg.step - 1e-9)), 1)
    dl = L / n
    ls = np.linspace(0.0, L, n + 1)
    kap = _interval_curvature(tube, ls)
    vmax2 = v_max**2 * (1.0 + 1e-9)

    ceil = _speed_ceiling(kap, plant, dl, cfg.v_floor)
    if cfg.v_start > ceil[0] * (1.0 + 1e-12):
        raise DpInfeasible(f"start speed {cfg.v_start} exceeds the admissible ceiling {ceil[0]:.4f}")
    frac = np.linspace(0.0, 1.0, cfg.n_levels)
    grids = cfg.v_floor + np.outer(ceil - cfg.v_floor, frac)

    table_cache: dict[tuple, np.ndarray] = {}
    accel_cache: dict[tuple, tuple] = {}

    def to_levels(i: int) -> np.ndarray:
        """Cost matrix from the levels of station i to the levels of station i+1."""
        key = (ceil[i], ceil[i + 1], kap[i])
        if key not in table_cache:
            g0, g1 = grids[i], grids[i + 1]
            t, u = _transition_times(g0[:, None], g1[None, :], dl, tau)
            ok = u**2 + (kap[i] * np.maximum(g0[:, None], g1[None, :]) ** 2 / tau) ** 2 <= vmax2
            table_cache[key] = np.where(ok, t, np.inf)
        return table_cache[key]

    def accel(i: int):
        key = (ceil[i], kap[i])
        if key not in accel_cache:
            accel_cache[key] = _max_accel(grids[i], kap[i], v_max, dl, tau)
        return accel_cache[key]

    def accel_cost(t_a, v_a, i: int, value_next: np.ndarray):
        g1 = grids[i + 1]
        inside = v_a < g1[-1]
        cost = t_a + np.interp(v_a, g1, value_next)
        return np.where(inside, cost, np.inf)

    value = np.zeros((n + 1, cfg.n_levels))
    for i in range(n - 1, -1, -1):
        c_lv = (to_levels(i) + value[i + 1][None, :]).min(axis=1)
        t_a, v_a = accel(i)
        value[i] = np.minimum(c_lv, accel_cost(t_a, v_a, i, value[i + 1]))
    if not np.isfinite(value[0]).any():
        raise DpInfeasible("no admissible speed sequence reaches the end of the tube")

    # forward rollout of the greedy policy from the exact start speed
    speed = np.empty(n + 1)
    speed[0] = v = cfg.v_start
    lap = 0.0
    for i in range(n):
        g1 = grids[i + 1]
        t_l, u_l = _transition_times(np.full(cfg.n_levels, v), g1, dl, tau)
        ok = u_l**2 + (kap[i] * np.maximum(v, g1) ** 2 / tau) ** 2 <= vmax2
        c_l = np.where(ok, t_l + value[i + 1], np.inf)
        t_a, v_a = _max_accel(np.array([v]), kap[i], v_max, dl, tau)
        c_a = accel_cost(t_a, v_a, i, value[i + 1])[0]
        j = int(np.argmin(c_l))
        if c_a < c_l[j]:
            lap += float(t_a[0])
            v = float(v_a[0])
        elif np.isfinite(c_l[j]):
            lap += float(t_l[j])
            v = float(g1[j])
        else:
            raise DpInfeasible(f"rollout stalled at l={ls[i]:.3f} m")
        speed[i + 1] = v
    return DpResult(lap, ls, speed, time.perf_counter() - t0)


def dp_lap_time(tube: VirtualTube, plant: PlantParams, cfg: DpConfig = DpConfig()) -> float:
    return dp_solve(tube, plant, cfg).lap_time


@dataclass(frozen=True)
class ArcCase:
    """Steady arc: length ``L``, radius ``r``, gains ``x_th``/``k_p``, bound ``lam``.

    ``k_prime`` scales how fast the error grows with angular speed; it has no
    constructive definition and is treated as a free positive parameter.
    """

    L: float
    r: float
    k_prime: float
    x_th: float
    k_p: float
    v_max: float
    lam: float

    def __post_init__(self):
        for name, val in self.__dict__.items():
            if not (math.isfinite(val) and val > 0.0):
                raise ValueError(f"{name} must be positive, got {val}")
        if self.x_th / self.k_p < self.lam * (1.0 - 1e-12):
            raise ValueError("x_th / k_p must be at least lam")

    @property
    def steady_error(self) -> float:
        return self.x_th / self.k_p


def _arc_time(L: float, r: float, k_prime: float, offset: float, v_max: float) -> float:
    ro = r + offset
    return L * ro * math.sqrt(k_prime**2 + ro**2) / (r * v_max)


def arc_lap_time(case: ArcCase) -> float:
    """Lap time with the drone settled at the steady error ``x_th / k_p``."""
    return _arc_time(case.L, case.r, case.k_prime, case.steady_error, case.v_max)


def arc_optimal_time(case: ArcCase) -> float:
    """Same expression with the steady error at its lower bound ``lam``."""
    return _arc_time(case.L, case.r, case.k_prime, case.lam, case.v_max)


def arc_time_ratio(case: ArcCase) -> float:
    return arc_lap_time(case) / arc_optimal_time(case)
