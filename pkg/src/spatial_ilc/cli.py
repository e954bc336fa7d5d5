"""Command-line front end.

    spatial-ilc --mode learn --track square --params my.yaml --out runs/sq

Modes: ``learn`` (one learning run), ``oracle`` (DP lap times per tau),
``compare`` (learning and DP per tau, ratio table) and ``sweep`` (closed-form
arc ratio surface). Exit codes: 0 success, 2 usage or validation error,
3 infeasible run.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys

import yaml

from .baseline import ArcCase, DpInfeasible, arc_lap_time, arc_optimal_time, dp_solve
from .config import ConfigError, Params, load_params, load_track, resolve_track
from .dynamics import PlantParams
from .learner import LearningConfigError, run_learning

log = logging.getLogger("spatial_ilc")

OUT_ENV = "SPATIAL_ILC_OUT"
DEFAULT_OUT = "out"
EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE = 0, 2, 3

ORACLE_COLUMNS = ["track", "tau", "dp_time_s", "ilc_time_s", "ratio"]
COMPARE_COLUMNS = ORACLE_COLUMNS + ["training_time_s", "iterations", "converged", "status"]
SWEEP_COLUMNS = ["x_th", "k_p", "r", "steady_error", "lam", "lap_time_s", "optimal_time_s", "ratio"]
DP_PROFILE_COLUMNS = ["l", "speed"]


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.9g}"
    return str(x)


def _write_csv(path: str, columns, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_manifest(out: str, mode: str, track: str | None, params: Params, seed: int) -> None:
    doc = {
        "mode": mode,
        "track": track,
        "seed": seed,
        "plant": dataclasses.asdict(params.plant),
        "ilc": dataclasses.asdict(params.ilc),
        "learning": dataclasses.asdict(params.learning),
        "dp": dataclasses.asdict(params.dp),
        "compare": {"taus": list(params.taus)},
        "sweep": {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(params.sweep).items()},
    }
    with open(os.path.join(out, "manifest.yaml"), "w") as f:
        yaml.safe_dump(doc, f, sort_keys=False)


def cmd_learn(track_ref: str, params: Params, out: str) -> int:
    tube = load_track(track_ref)
    try:
        run = run_learning(tube, params.plant, params.ilc, params.learning)
    except LearningConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    run.write_summary(os.path.join(out, "summary.csv"))
    run.write_profiles(os.path.join(out, "profiles"))
    fin = run.finished_records
    if fin:
        last = fin[-1]
        last.trace.to_csv(os.path.join(out, "trace.csv"), last.profile.v_star)
    state = f"converged at iteration {run.converged_at}" if run.converged else "not converged"
    print(f"{tube.name}: best lap {run.best_lap_time:.4f} s, final lap {run.final_lap_time:.4f} s, "
          f"{len(run.records)} iterations, {state}")
    return EXIT_OK


def _plant_at(params: Params, tau: float) -> PlantParams:
    return dataclasses.replace(params.plant, tau=tau)


def cmd_oracle(track_ref: str, params: Params, out: str) -> int:
    tube = load_track(track_ref)
    rows, status = [], EXIT_OK
    for tau in params.taus:
        try:
            res = dp_solve(tube, _plant_at(params, tau), params.dp)
        except DpInfeasible as exc:
            log.warning("tau=%g: %s", tau, exc)
            rows.append([tube.name, tau, math.nan, math.nan, math.nan])
            status = EXIT_INFEASIBLE
            continue
        rows.append([tube.name, tau, res.lap_time, math.nan, math.nan])
        _write_csv(os.path.join(out, f"dp_profile_tau{tau:g}.csv"), DP_PROFILE_COLUMNS, zip(res.l, res.speed))
        print(f"{tube.name} tau={tau:g}: DP lap {res.lap_time:.4f} s ({res.wall_time:.2f} s wall)")
    _write_csv(os.path.join(out, "oracle.csv"), ORACLE_COLUMNS, rows)
    return status


def cmd_compare(track_ref: str, params: Params, out: str) -> int:
    tube = load_track(track_ref)
    rows, walls, status = [], [], EXIT_OK
    print(f"{'tau':>6} {'dp_s':>9} {'ilc_s':>9} {'ratio':>7} {'ilc_wall':>9} {'dp_wall':>8} {'wall_ratio':>10}")
    for tau in params.taus:
        plant = _plant_at(params, tau)
        dp_t = ilc_t = train = math.nan
        iters, conv, state = 0, False, "ok"
        dp_wall = ilc_wall = math.nan
        try:
            res = dp_solve(tube, plant, params.dp)
            dp_t, dp_wall = res.lap_time, res.wall_time
        except DpInfeasible as exc:
            log.warning("tau=%g: %s", tau, exc)
            state, status = "dp_infeasible", EXIT_INFEASIBLE
        try:
            run = run_learning(tube, plant, params.ilc, params.learning)
            ilc_t, train, ilc_wall = run.final_lap_time, run.simulated_time, run.wall_time
            iters, conv = len(run.records), run.converged
            if not conv and state == "ok":
                state = "not_converged"
        except LearningConfigError as exc:
            log.warning("tau=%g: %s", tau, exc)
            state, status = "learning_failed", EXIT_INFEASIBLE
        ratio = ilc_t / dp_t
        rows.append([tube.name, tau, dp_t, ilc_t, ratio, train, iters, conv, state])
        walls.append({"tau": tau, "ilc_wall_s": ilc_wall, "dp_wall_s": dp_wall})
        print(f"{tau:6g} {dp_t:9.4f} {ilc_t:9.4f} {ratio:7.4f} {ilc_wall:9.3f} {dp_wall:8.3f} {ilc_wall / dp_wall:10.3f}")
    _write_csv(os.path.join(out, "compare.csv"), COMPARE_COLUMNS, rows)
    # wall-clock numbers vary run to run, so they stay out of the CSV
    with open(os.path.join(out, "wall_clock.json"), "w") as f:
        json.dump(walls, f, indent=2)
    return status


def sweep_rows(params: Params):
    sw = params.sweep
    lam = sw.lam_value
    for x_th in sw.x_th:
        for k_p in sw.k_p:
            if x_th / k_p < lam * (1.0 - 1e-12):
                raise ConfigError(f"sweep.lam: {lam:g} exceeds x_th/k_p = {x_th / k_p:g}")
            for r in sorted(sw.r):
                case = ArcCase(sw.L, r, sw.k_prime, x_th, k_p, sw.v_max, lam)
                t, t_op = arc_lap_time(case), arc_optimal_time(case)
                yield [x_th, k_p, r, case.steady_error, lam, t, t_op, t / t_op]


def cmd_sweep(params: Params, out: str) -> int:
    rows = list(sweep_rows(params))
    _write_csv(os.path.join(out, "sweep.csv"), SWEEP_COLUMNS, rows)
    worst = max(r[-1] for r in rows)
    print(f"sweep: {len(rows)} cells, lam={params.sweep.lam_value:g}, max T/T_op={worst:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spatial-ilc", description="Spatial iterative learning control for tube racing.")
    p.add_argument("--mode", required=True, choices=["learn", "oracle", "compare", "sweep"])
    p.add_argument("--track", help="bundled track name or path to a track file (not used by sweep)")
    p.add_argument("--params", help="parameter file; bundled defaults when omitted")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--seed", type=int, default=0, help="recorded in the manifest; runs are deterministic")
    p.add_argument("--verbose", "-v", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.mode != "sweep" and not args.track:
        parser.error(f"--track is required for --mode {args.mode}")
    out = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    try:
        params = load_params(args.params)
        if args.track:
            path = resolve_track(args.track)
            if not os.path.isfile(path):
                raise ConfigError(f"track file not found: {path}")
        if args.mode in ("oracle", "compare") and not params.taus:
            raise ConfigError("compare.taus: the tau list is empty")
        os.makedirs(out, exist_ok=True)
        _write_manifest(out, args.mode, args.track, params, args.seed)
        if args.mode == "learn":
            return cmd_learn(args.track, params, out)
        if args.mode == "oracle":
            return cmd_oracle(args.track, params, out)
        if args.mode == "compare":
            return cmd_compare(args.track, params, out)
        return cmd_sweep(params, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
