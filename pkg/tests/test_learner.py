import dataclasses
import math

import numpy as np
import pytest

from spatial_ilc.controller import AlignmentError, IlcController, IlcParams, SpeedProfile
from spatial_ilc.dynamics import Outcome, PlantParams, arclength_grid, run_lap
from spatial_ilc.learner import (
    SUMMARY_COLUMNS,
    LearningConfig,
    LearningConfigError,
    converged,
    handle_failure,
    next_profile,
    run_learning,
)

from .conftest import bundled

GRID = np.linspace(0.0, 20.0, 401)
CURVED = ["circle", "square", "scurve", "soccer"]


def test_failure_halves_within_halo():
    prof = SpeedProfile.uniform(GRID, 2.0)
    cfg = LearningConfig(failure_shrink=0.5, failure_halo=3.0)
    out = handle_failure(prof, 10.0, cfg)
    near = (GRID >= 7.0) & (GRID <= 13.0)
    assert np.all(out.v_star[near] == 1.0)
    assert np.all(out.v_star[~near] == 2.0)
    assert out.k == prof.k + 1


def test_repeated_failures_compound():
    cfg = LearningConfig()
    prof = SpeedProfile.uniform(GRID, 2.0)
    twice = handle_failure(handle_failure(prof, 10.0, cfg), 10.0, cfg)
    assert twice.v_star[200] == pytest.approx(0.5)


@pytest.mark.parametrize("outcome", [Outcome.FINISHED, Outcome.TIMEOUT])
def test_failure_policy_noop(outcome):
    prof = SpeedProfile.uniform(GRID, 2.0)
    assert handle_failure(prof, 10.0, LearningConfig(), outcome) is prof


def test_converged_helper():
    assert not converged([10.0, 9.0, 8.99], 0.05, 3)
    assert converged([10.0, 9.0, 8.99, 8.98, 8.97], 0.05, 3)
    assert not converged([10.0, 9.0, math.nan, 8.98, 8.97], 0.05, 3)


@pytest.mark.parametrize("kwargs", [
    {"max_iterations": 0},
    {"failure_shrink": 1.0},
    {"failure_halo": 0.0},
    {"convergence_window": 0},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        LearningConfig(**kwargs)


def test_straight_reaches_speed_limit():
    tube = bundled("straight")
    run = run_learning(tube, PlantParams(10.0, 5.0), IlcParams())
    assert run.converged
    assert run.final_lap_time <= 1.05 * tube.length / 5.0


def test_run_is_deterministic(params):
    tube = bundled("scurve")
    a = run_learning(tube, params.plant, params.ilc, params.learning)
    b = run_learning(tube, params.plant, params.ilc, params.learning)
    assert len(a.records) == len(b.records)
    for ra, rb in zip(a.records, b.records):
        assert ra.lap_time == rb.lap_time or (math.isnan(ra.lap_time) and math.isnan(rb.lap_time))
        assert np.array_equal(ra.profile.v_star, rb.profile.v_star)
        assert np.array_equal(ra.trace.t, rb.trace.t)


@pytest.mark.parametrize("name", ["straight", *CURVED])
def test_lap_times_settle_after_iteration_3(name, params):
    run = run_learning(bundled(name), params.plant, params.ilc, params.learning)
    times = run.lap_times()
    assert run.converged and not np.isnan(times).any()
    tol = params.learning.convergence_tol
    assert np.all(np.diff(times[3:]) <= tol)
    assert len(run.records) <= params.learning.max_iterations
    assert run.best_lap_time == pytest.approx(np.nanmin(times))
    assert run.max_v_star < params.ilc.v_star_cap


def test_first_lap_failure_is_config_error(params):
    with pytest.raises(LearningConfigError, match="v_star_init"):
        run_learning(bundled("square"), dataclasses.replace(params.plant, tau=1.0),
                     dataclasses.replace(params.ilc, v_star_init=50.0), params.learning)


def test_initial_profile_must_match_grid(params):
    bad = SpeedProfile.uniform(np.linspace(0.0, 5.0, 11), 1.0)
    with pytest.raises(AlignmentError):
        run_learning(bundled("straight"), params.plant, params.ilc, params.learning, initial_profile=bad)


def _lap(tube, prof, plant, ilc, cfg):
    return run_lap(tube, IlcController(prof, ilc, plant.v_max), plant, t_max=cfg.t_max,
                   v_init=cfg.v_init, grid_step=cfg.grid_step)


@pytest.mark.parametrize("name", CURVED)
def test_safety_recovery_after_single_exit(name, params):
    """An overspeed into one corner is repaired within three laps."""
    tube = bundled(name)
    plant = dataclasses.replace(params.plant, tau=1.0)
    ilc, cfg = params.ilc, params.learning
    base = run_learning(tube, plant, ilc, cfg).final_profile
    fast = np.minimum(8.0 * base.v_star, ilc.v_star_cap)
    l_exit = _lap(tube, dataclasses.replace(base, v_star=fast), plant, ilc, cfg).l_end
    prof = dataclasses.replace(base, v_star=np.where(base.grid < l_exit + cfg.failure_halo, fast, base.v_star))

    first = _lap(tube, prof, plant, ilc, cfg)
    assert first.outcome is Outcome.TUBE_EXIT
    prof = next_profile(prof, first, ilc, cfg)
    for _ in range(3):
        tr = _lap(tube, prof, plant, ilc, cfg)
        if tr.finished:
            break
        prof = next_profile(prof, tr, ilc, cfg)
    assert tr.finished


@pytest.mark.parametrize("name", CURVED)
def test_every_exit_is_passed_within_three_laps(name, params):
    tube = bundled(name)
    plant = dataclasses.replace(params.plant, tau=1.0)
    ilc, cfg = params.ilc, params.learning
    base = run_learning(tube, plant, ilc, cfg).final_profile
    prof = dataclasses.replace(base, v_star=np.minimum(8.0 * base.v_star, ilc.v_star_cap))
    reach = []
    for _ in range(12):
        tr = _lap(tube, prof, plant, ilc, cfg)
        reach.append(math.inf if tr.finished else tr.l_end)
        prof = next_profile(prof, tr, ilc, cfg)
    assert reach[-1] == math.inf
    for i, l in enumerate(reach):
        if l < math.inf:
            assert max(reach[i + 1:i + 4]) > l + 0.5


def test_failed_lap_update_masks_unflown_part(params):
    tube = bundled("straight")
    grid = arclength_grid(tube.length, params.learning.grid_step)
    prof = SpeedProfile.uniform(grid, 1.0)
    tr = run_lap(tube, lambda s, p: (0.0, 3.0), params.plant, grid_step=params.learning.grid_step)
    assert tr.outcome is Outcome.TUBE_EXIT
    new = next_profile(prof, tr, params.ilc, params.learning)
    beyond = grid > tr.l_end + params.learning.failure_halo
    assert np.all(new.v_star[beyond] == 1.0)
    assert new.k == 1


def test_summary_and_profiles(tmp_path, params):
    run = run_learning(bundled("square"), params.plant, params.ilc, params.learning)
    run.write_summary(tmp_path / "summary.csv")
    run.write_profiles(tmp_path / "profiles")
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[0] == ",".join(SUMMARY_COLUMNS)
    assert len(lines) == len(run.records) + 1
    files = sorted((tmp_path / "profiles").iterdir())
    assert len(files) == len(run.records)
    assert files[0].read_text().splitlines()[0] == "l,v_star,e_norm"
