"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records ``(passed, detail)`` in ``conftest.ACCEPTANCE`` before
asserting, so the terminal summary shows one line per criterion whether it
passes or not. Run standalone with ``python -m tests.test_acceptance``.
"""

import dataclasses
import math
import sys

import numpy as np
import pytest

from spatial_ilc.baseline import ArcCase, arc_lap_time, arc_optimal_time
from spatial_ilc.cli import main
from spatial_ilc.config import BUNDLED_TRACKS
from spatial_ilc.dynamics import DroneState, PlantParams, step
from spatial_ilc.geometry import Vec2, project
from spatial_ilc.learner import run_learning

from .conftest import ACCEPTANCE, bundled, default_params, dp_at, learn_at
from .test_dynamics import euler_maneuver, maneuver_commands

pytestmark = pytest.mark.acceptance

TAUS = (1.0, 5.0, 10.0, 30.0)
RATIO_TRACKS = ("square", "scurve")


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, f"criterion {n}: {detail}"


def test_c01_near_optimality():
    worst, slowest, cells = 0.0, 0.0, []
    ok = True
    for name in RATIO_TRACKS:
        for tau in TAUS:
            dp, run = dp_at(name, tau), learn_at(name, tau)
            ratio = run.final_lap_time / dp.lap_time
            wall = dp.wall_time + run.wall_time
            ok &= run.converged and 1.0 <= ratio <= 1.05 and wall <= 60.0 and bundled(name).length <= 100.0
            worst, slowest = max(worst, ratio), max(slowest, wall)
            cells.append(f"{name}/{tau:g}={ratio:.4f}")
    record(1, ok, f"ILC/DP in [1.00, 1.05]: max {worst:.4f}, slowest cell {slowest:.1f} s ({', '.join(cells)})")


def test_c02_training_wall_time():
    ratios = []
    for name in RATIO_TRACKS:
        for tau in TAUS:
            ratios.append(learn_at(name, tau).wall_time / dp_at(name, tau).wall_time)
    worst = max(ratios)
    record(2, worst <= 0.05, f"ILC wall / DP wall <= 0.05: max {worst:.3f}, min {min(ratios):.3f}")


def test_c03_convergence_within_20():
    p = default_params()
    its = {}
    for name in BUNDLED_TRACKS:
        run = learn_at(name, p.plant.tau)
        its[name] = run.converged_at if run.converged else None
    ok = all(k is not None and k + 1 <= 20 for k in its.values())
    shown = ", ".join(f"{n}={'-' if k is None else k + 1}" for n, k in its.items())
    record(3, ok, f"iterations to convergence (tol 0.05 s, window 3): {shown}")


def test_c04_straight_optimum():
    p = default_params()
    tube = bundled("straight")
    t = learn_at("straight", p.plant.tau).final_lap_time
    bound = 1.05 * tube.length / p.plant.v_max
    record(4, t <= bound, f"straight lap {t:.4f} s <= {bound:.4f} s")


def test_c05_steady_arc_error():
    """Runs the learning law to its fixed point, past lap-time convergence."""
    p = default_params()
    tube = bundled("circle")
    cfg = dataclasses.replace(p.learning, max_iterations=400, stop_on_convergence=False)
    run = run_learning(tube, p.plant, p.ilc, cfg)
    trace = run.records[-1].trace
    half = trace.l >= 0.5 * tube.length
    e_bar = float(np.mean(trace.e_norm[half]))
    target = p.ilc.steady_error
    rel = abs(e_bar - target) / target
    record(5, rel <= 0.05, f"circle steady |e_p| {e_bar:.4f} m vs x_th/k_p {target:.4f} m ({100 * rel:.2f}%)")


def test_c06_parameter_insensitivity():
    sw = default_params().sweep
    lam = sw.lam_value
    worst, at_bound = 0.0, 0.0
    for k_prime in (0.5, 1.0, 2.0):
        for x_th in sw.x_th:
            for k_p in sw.k_p:
                for r in (r for r in sw.r if r >= 100.0 * lam):
                    case = ArcCase(sw.L, r, k_prime, x_th, k_p, sw.v_max, lam)
                    ratio = arc_lap_time(case) / arc_optimal_time(case)
                    worst = max(worst, ratio)
                    if math.isclose(case.steady_error, lam):
                        at_bound = max(at_bound, abs(ratio - 1.0))
    ok = worst <= 1.01 and at_bound == 0.0
    record(6, ok, f"max T/T_op for r >= 100*lam ({100 * lam:g} m): {worst:.4f}; |ratio-1| at x_th/k_p=lam: {at_bound:g}")


def test_c07_boundedness():
    p = default_params()
    cap = p.ilc.v_star_cap
    cfg = dataclasses.replace(p.learning, max_iterations=100, stop_on_convergence=False)
    worst = 0.0
    for name in BUNDLED_TRACKS:
        for k_d in (p.ilc.k_d / math.sqrt(10.0), p.ilc.k_d, p.ilc.k_d * math.sqrt(10.0)):
            run = run_learning(bundled(name), p.plant, dataclasses.replace(p.ilc, k_d=k_d), cfg)
            worst = max(worst, run.max_v_star)
    record(7, worst < cap / 2.0, f"max v* over 100 iterations, k_d over one decade: {worst:.2f} < {cap / 2:g}")


def test_c08_plant_exactness():
    worst = 0.0
    for tau in TAUS:
        params = PlantParams(tau, 4.0, 0.01)
        cmds = maneuver_commands(params.v_max, 1000, params.dt)
        s0 = DroneState(Vec2(0.0, 0.0), Vec2(0.5, 0.0))
        s = s0
        for c in cmds:
            s = step(s, c, params)
        p_e, v_e = euler_maneuver(s0, cmds, params, 1000)
        worst = max(worst,
                    np.linalg.norm(np.subtract(s.p, p_e)) / np.linalg.norm(p_e),
                    np.linalg.norm(np.subtract(s.v, v_e)) / np.linalg.norm(v_e))
    record(8, worst <= 1e-5, f"exact step vs 1000x Euler over 10 s: max relative error {worst:.2e}")


def test_c09_geometry_invariants():
    rng = np.random.default_rng(12345)
    worst_orth = 0.0
    for _ in range(10_000):
        tube = bundled(BUNDLED_TRACKS[rng.integers(len(BUNDLED_TRACKS))])
        l = float(rng.uniform(0.0, tube.length))
        _, tans, _ = tube.curve.sample([l])
        off = float(rng.uniform(-0.99, 0.99))
        m = tube.curve.point(l)
        p = Vec2(m.x - off * tans[0, 1], m.y + off * tans[0, 0])
        pr = project(tube, p, l)
        worst_orth = max(worst_orth, abs(pr.tangent.dot(pr.e_p)))
    worst_close = 0.0
    for name in BUNDLED_TRACKS:
        tube = bundled(name)
        ls = np.linspace(0.0, tube.length, 200_001)
        _, tans, _ = tube.curve.sample(0.5 * (ls[1:] + ls[:-1]))
        end = np.asarray(tube.curve.point(0.0)) + (tans * np.diff(ls)[:, None]).sum(axis=0)
        worst_close = max(worst_close, np.linalg.norm(end - np.asarray(tube.curve.point(tube.length))) / tube.length)
    ok = worst_orth < 1e-9 and worst_close < 1e-6
    record(9, ok, f"orthogonality residual {worst_orth:.1e} (1e4 points), closure {worst_close:.1e}*L")


def test_c10_determinism(tmp_path):
    runs = [
        ["--mode", "learn", "--track", "soccer"],
        ["--mode", "compare", "--track", "square"],
        ["--mode", "sweep"],
    ]
    mismatched = []
    for args in runs:
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{args[1]}_{tag}"
            assert main(args + ["--out", str(out)]) == 0
            outs.append(out)
        files = sorted(f.relative_to(outs[0]) for f in outs[0].rglob("*.csv"))
        assert files
        for f in files:
            if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes():
                mismatched.append(f"{args[1]}:{f}")
        assert (outs[0] / "manifest.yaml").read_bytes() == (outs[1] / "manifest.yaml").read_bytes()
    record(10, not mismatched, "identical manifests give byte-identical CSVs" + (f"; differ: {mismatched}" if mismatched else ""))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
