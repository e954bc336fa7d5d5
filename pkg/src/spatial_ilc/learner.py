"""Outer learning loop: fly a lap, learn from its error profile, repeat."""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .controller import AlignmentError, ErrorProfile, IlcController, IlcParams, SpeedProfile, update_profile
from .dynamics import GRID_STEP, V_FLOOR, V_INIT, LapTrace, Outcome, PlantParams, arclength_grid, run_lap
from .geometry import VirtualTube

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["iteration", "lap_time_s", "outcome", "max_e_norm"]


class LearningConfigError(RuntimeError):
    """The learning run cannot start from the given configuration."""


@dataclass(frozen=True)
class LearningConfig:
    max_iterations: int = 20
    convergence_tol: float = 0.05
    convergence_window: int = 3
    failure_shrink: float = 0.5
    failure_halo: float = 3.0
    t_max: float = 120.0
    v_init: float = V_INIT
    grid_step: float = GRID_STEP
    v_floor: float = V_FLOOR
    stop_on_convergence: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0.0 < self.failure_shrink < 1.0:
            raise ValueError("failure_shrink must lie in (0, 1)")
        if self.convergence_window < 1:
            raise ValueError("convergence_window must be at least 1")
        for name in ("convergence_tol", "failure_halo", "t_max", "v_init", "grid_step", "v_floor"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class IterationRecord:
    k: int
    outcome: Outcome
    lap_time: float
    l_end: float
    max_e_norm: float
    profile: SpeedProfile  # the profile flown in this lap
    trace: LapTrace


@dataclass
class LearningRun:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    converged_at: int | None = None
    wall_time: float = 0.0
    final_profile: SpeedProfile | None = None

    @property
    def finished_records(self) -> list[IterationRecord]:
        return [r for r in self.records if r.outcome is Outcome.FINISHED]

    @property
    def best_lap_time(self) -> float:
        times = [r.lap_time for r in self.finished_records]
        return min(times) if times else math.nan

    @property
    def final_lap_time(self) -> float:
        fin = self.finished_records
        return fin[-1].lap_time if fin else math.nan

    @property
    def simulated_time(self) -> float:
        """Total flown time over all laps, failed ones included."""
        return float(sum(r.trace.t[-1] if len(r.trace.t) else 0.0 for r in self.records))

    @property
    def max_v_star(self) -> float:
        profiles = [r.profile.v_star for r in self.records]
        if self.final_profile is not None:
            profiles.append(self.final_profile.v_star)
        return float(max(p.max() for p in profiles))

    def lap_times(self) -> np.ndarray:
        return np.array([r.lap_time for r in self.records])

    def write_summary(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(SUMMARY_COLUMNS)
            for r in self.records:
                w.writerow([r.k, f"{r.lap_time:.9g}", r.outcome.value, f"{r.max_e_norm:.9g}"])

    def write_profiles(self, directory) -> None:
        """One ``profile_XXX.csv`` (l, v_star, e_norm) per iteration."""
        os.makedirs(directory, exist_ok=True)
        for r in self.records:
            n = len(r.trace.e_norm)
            e = np.full(len(r.profile.grid), np.nan)
            e[:n] = r.trace.e_norm
            with open(os.path.join(directory, f"profile_{r.k:03d}.csv"), "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["l", "v_star", "e_norm"])
                for row in zip(r.profile.grid, r.profile.v_star, e):
                    w.writerow([f"{v:.9g}" for v in row])


def handle_failure(profile: SpeedProfile, l_exit: float, cfg: LearningConfig, outcome: Outcome = Outcome.TUBE_EXIT) -> SpeedProfile:
    """Shrink ``v_star`` by ``failure_shrink`` within ``failure_halo`` of the failure point.

    Only tube exits and lost projections are speed failures; a finished lap or
    a timeout (the drone was too slow) leaves the profile untouched.
    """
    if outcome in (Outcome.FINISHED, Outcome.TIMEOUT):
        return profile
    near = np.abs(profile.grid - l_exit) <= cfg.failure_halo + 1e-12
    v = np.where(near, profile.v_star * cfg.failure_shrink, profile.v_star)
    return replace(profile, v_star=v, k=profile.k + 1)


def _errors_on_grid(trace: LapTrace, grid: np.ndarray) -> ErrorProfile:
    e = np.zeros(len(grid))
    n = len(trace.e_norm)
    e[:n] = trace.e_norm
    if n:
        e[n:] = trace.e_norm[-1]
    e[0] = 0.0
    return ErrorProfile.from_samples(grid, e)


def next_profile(profile: SpeedProfile, trace: LapTrace, ilc: IlcParams, cfg: LearningConfig) -> SpeedProfile:
    """Profile for the next lap after flying ``trace`` with ``profile``.

    A failed lap learns only where it was flown cleanly, then applies the
    failure shrink around the failure point.
    """
    errors = _errors_on_grid(trace, profile.grid)
    if trace.finished:
        return update_profile(profile, errors, ilc)
    reached = profile.grid < trace.l_end - cfg.failure_halo
    profile = update_profile(profile, errors, ilc, mask=reached)
    return replace(handle_failure(profile, trace.l_end, cfg, trace.outcome), k=profile.k)


def converged(lap_times: list[float], tol: float, window: int) -> bool:
    """True when the last ``window`` lap-to-lap changes are all below ``tol``.

    ``lap_times`` holds NaN for laps that did not finish; those break the run.
    """
    if len(lap_times) < window + 1:
        return False
    tail = lap_times[-(window + 1):]
    if any(math.isnan(t) for t in tail):
        return False
    return all(abs(b - a) < tol for a, b in zip(tail[:-1], tail[1:]))


def run_learning(
    tube: VirtualTube,
    plant: PlantParams,
    ilc: IlcParams,
    cfg: LearningConfig = LearningConfig(),
    initial_profile: SpeedProfile | None = None,
) -> LearningRun:
    """Iterate laps and profile updates until lap times settle or the budget runs out.

    ``initial_profile`` replaces the uniform ``v_star_init`` start; it must live
    on the run's arclength grid.
    """
    t_start = time.perf_counter()
    grid = arclength_grid(tube.length, cfg.grid_step)
    if initial_profile is None:
        profile = SpeedProfile.uniform(grid, ilc.v_star_init)
    elif len(initial_profile.grid) != len(grid) or not np.allclose(initial_profile.grid, grid, rtol=0, atol=1e-9):
        raise AlignmentError("initial profile does not match the arclength grid")
    else:
        profile = initial_profile
    run = LearningRun()
    times: list[float] = []

    for k in range(cfg.max_iterations):
        ctrl = IlcController(profile, ilc, plant.v_max, cfg.v_floor)
        trace = run_lap(tube, ctrl, plant, t_max=cfg.t_max, v_init=cfg.v_init, grid_step=cfg.grid_step, v_floor=cfg.v_floor)
        max_e = float(trace.e_norm.max()) if len(trace.e_norm) else 0.0
        run.records.append(IterationRecord(k, trace.outcome, trace.lap_time, trace.l_end, max_e, profile, trace))
        log.debug("iteration %d: %s T=%.4f max|e|=%.3f", k, trace.outcome.value, trace.lap_time, max_e)

        if not trace.finished and k == 0:
            raise LearningConfigError(
                f"first lap ended with {trace.outcome.value} at l={trace.l_end:.2f} m; lower v_star_init"
            )
        times.append(trace.lap_time if trace.finished else math.nan)
        profile = next_profile(profile, trace, ilc, cfg)

        if converged(times, cfg.convergence_tol, cfg.convergence_window) and not run.converged:
            run.converged = True
            run.converged_at = k
            if cfg.stop_on_convergence:
                break

    run.final_profile = profile
    run.wall_time = time.perf_counter() - t_start
    return run
