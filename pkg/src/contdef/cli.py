"""Command-line entry point.

Exit codes: 0 pass, 1 validation failure, 2 safety failure, 3 planner failure.
Errors are written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import errors, pipeline
from .scenario import parse_scenario

EXIT_OK, EXIT_INVALID, EXIT_UNSAFE, EXIT_PLANNER = 0, 1, 2, 3

_VALIDATION = (
    errors.ParseError, errors.SchemaError, errors.InvalidConfiguration, errors.ContainmentViolated,
    errors.Unreachable, errors.SingularA, errors.DegenerateSimplex, errors.OffHyperplane,
    errors.InvalidFeature, errors.SingularTransform, errors.OrientationReversing, errors.MissingNeighbor,
)
_SAFETY = (
    errors.TooDense, errors.GuardTripped, errors.InputSaturated, errors.AnglesNotConstant,
    errors.SingularLinearization, errors.NotPositiveDefinite,
)
_PLANNER = (errors.NoPath, errors.InvalidEndpoint, errors.InfeasibleSegment, errors.OutOfSegment)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, _PLANNER):
        return EXIT_PLANNER
    if isinstance(exc, _SAFETY):
        return EXIT_UNSAFE
    return EXIT_INVALID


def _error_record(exc: BaseException) -> dict[str, Any]:
    rec: dict[str, Any] = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, errors.SchemaError):
        rec["fields"] = [{"path": p, "message": m} for p, m in exc.errors]
    for attr in ("agent", "agents", "time", "channel", "value", "reason", "weights"):
        if hasattr(exc, attr):
            v = getattr(exc, attr)
            rec[attr] = list(v) if isinstance(v, tuple) else v
    return rec


def _emit(obj: Any, out: Path | None = None) -> None:
    text = json.dumps(obj, indent=2, default=_json_default)
    if out is None:
        print(text)
    else:
        out.write_text(text + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _context(path: str) -> pipeline.Context:
    return pipeline.Context.build(parse_scenario(path))


def _plan(ctx: pipeline.Context, plan_file: str | None):
    if plan_file:
        return pipeline.plan_from_dict(json.loads(Path(plan_file).read_text()))
    return pipeline.build_plan(ctx).plan


# --------------------------------------------------------------------------- verbs


def cmd_validate(args) -> int:
    sc = parse_scenario(args.scenario)
    checks = pipeline.validate(sc)
    ok = all(c.passed for c in checks)
    _emit({"scenario": sc.name, "passed": ok, "checks": [c.to_dict() for c in checks]})
    return EXIT_OK if ok else EXIT_INVALID


def cmd_weights(args) -> int:
    ctx = _context(args.scenario)
    m = ctx.model
    leaders = list(ctx.cfg.leaders)
    out = {
        "leaders": leaders,
        "followers": list(ctx.cfg.followers),
        "weights": {str(i): {str(j): w for j, w in m.weights[i].items()} for i in ctx.cfg.followers},
        "real_weights": {str(i): {str(j): w for j, w in m.real_weights[i].items()} for i in ctx.cfg.followers},
        "W_L": {str(i): dict(zip(map(str, leaders), row)) for i, row in zip(m.order[len(leaders):], m.W_L.tolist())},
        "max_re_eig_A": float(np.linalg.eigvals(m.A).real.max()),
    }
    if args.json:
        _emit(out)
        return EXIT_OK
    print("follower  in-neighbor weights")
    for i in ctx.cfg.followers:
        row = ", ".join(f"{j}:{w:.4g}" for j, w in m.weights[i].items())
        print(f"{i:>8}  ({row})")
    print("\nreal weights (auxiliary nodes eliminated)")
    for i in ctx.cfg.followers:
        row = ", ".join(f"{j}:{w:.4g}" for j, w in m.real_weights[i].items())
        print(f"{i:>8}  ({row})")
    print("\nW_L (rows: followers and auxiliary nodes, columns: leaders " + " ".join(map(str, leaders)) + ")")
    for i, row in zip(m.order[len(leaders):], m.W_L):
        print(f"{i:>8}  " + "  ".join(f"{x:+.6f}" for x in row))
    print(f"\nmax Re eig(A) = {out['max_re_eig_A']:.6g}")
    return EXIT_OK


def _read_leader_csv(path: str, leaders: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    rows: dict[float, dict[int, list[float]]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            aid = int(r["agent-id"])
            if aid in leaders:
                rows.setdefault(float(r["time"]), {})[aid] = [float(r["x"]), float(r["y"]), float(r["z"])]
    times = sorted(t for t, v in rows.items() if len(v) == len(leaders))
    if not times:
        raise errors.ParseError(f"{path}: no sample lists every leader")
    pos = np.array([[rows[t][i] for i in leaders] for t in times])
    return np.array(times), pos


def cmd_decompose(args) -> int:
    ctx = _context(args.scenario)
    cfg = ctx.cfg
    if args.leaders:
        times, pos = _read_leader_csv(args.leaders, cfg.leaders)
    else:
        plan = _plan(ctx, args.plan)
        times = np.linspace(plan.t0, plan.t_final, args.samples)
        pos = plan.leader_jet(cfg, times, 0)[0]
    hint = ctx.params.u1_ref if cfg.n == 3 else None
    rows = pipeline.feature_rows(cfg, pos, times, u1_hint=hint)
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        keys = list(rows[0])
        w.writerow(keys)
        for r in rows:
            w.writerow([f"{r[k]:.9g}" if isinstance(r[k], float) else r[k] for k in keys])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_plan(args) -> int:
    ctx = _context(args.scenario)
    outcome = pipeline.build_plan(ctx)
    _emit(outcome.to_dict(), Path(args.output) if args.output else None)
    if args.output:
        print(json.dumps({"plan": args.output, "segments": len(outcome.segment_times),
                          "horizon": outcome.plan.horizon}))
    return EXIT_OK


def cmd_simulate(args) -> int:
    ctx = _context(args.scenario)
    plan = _plan(ctx, args.plan)
    kw = {}
    if args.dt:
        kw["dt"] = args.dt
    if args.saturation:
        kw["saturation"] = args.saturation
    traj = pipeline.simulate(ctx, plan, **kw)
    out = Path(args.output) if args.output else Path(f"{ctx.scenario.name}_trajectory.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(pipeline.CSV_HEADER)
        w.writerows(pipeline.trajectory_rows(traj))
    sup, agent, when = traj.sup_deviation()
    _emit({
        "trajectory": str(out),
        "rows": len(traj.times) * len(traj.ids),
        "sup_deviation": sup,
        "sup_deviation_agent": agent,
        "sup_deviation_time": when,
        "max_deviation": {str(i): float(d) for i, d in zip(traj.ids, traj.max_deviation)},
        "max_input": traj.max_input.max(axis=0).tolist(),
        "saturated_steps": traj.saturated_steps,
    })
    return EXIT_OK


def cmd_certify(args) -> int:
    ctx = _context(args.scenario)
    plan = _plan(ctx, args.plan)
    traj = pipeline.simulate(ctx, plan) if args.simulate else None
    report = pipeline.certify(ctx, plan, traj, mode=args.mode, samples=args.samples)
    _emit(report.to_dict(), Path(args.output) if args.output else None)
    return EXIT_OK if report.passed else EXIT_UNSAFE


def cmd_reproduce(args) -> int:
    if args.case != "table2":
        raise errors.ParseError(f"unknown case {args.case!r}; available: table2")
    r = pipeline.reproduce_table2(args.scenario, args.dt)
    if args.json:
        _emit(r)
    else:
        print(f"d_s = {r['d_s']:.4f} m (pair {r['pair'][0]}, {r['pair'][1]})")
        print(f"theta_u0 = {r['theta_u0']:.4f} rad, psi_u0 = {r['psi_u0']:.4f} rad")
        print(f"d_b = {r['d_b']:.4f} m, delta_max = {r['delta_max']:.4f} m, delta = {r['delta']:.4f} m")
        print(f"max Re eig(A) = {r['max_re_eig_A']:.4f}")
        print(f"sup-deviation = {r['sup_deviation']:.3e} m (agent {r['sup_deviation_agent']}) <= 0.67 m: "
              f"{'pass' if r['deviation_pass'] else 'FAIL'}")
        print(f"min desired distance = {r['min_desired_distance']:.4f} m >= 2 epsilon: "
              f"{'pass' if r['separation_pass'] else 'FAIL'}")
        print(f"safety report: {'pass' if r['safety_passed'] else 'FAIL'}")
        print("pass" if r["pass"] else "FAIL")
    return EXIT_OK if r["pass"] else EXIT_UNSAFE


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="contdef", description="Continuum deformation planning and simulation.")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("validate", help="check the modelling assumptions of a scenario")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("weights", help="communication weights, real weights and W_L")
    s.add_argument("scenario")
    s.add_argument("--json", action="store_true", help="machine-readable output")
    s.set_defaults(func=cmd_weights)

    s = sub.add_parser("decompose", help="features over time from a leader trajectory")
    s.add_argument("scenario")
    s.add_argument("--leaders", help="trajectory CSV (columns time, agent-id, x, y, z); default: the scenario plan")
    s.add_argument("--plan", help="plan file written by the plan verb")
    s.add_argument("--samples", type=int, default=251)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("plan", help="build the leader plan")
    s.add_argument("scenario")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("simulate", help="closed-loop team simulation to CSV")
    s.add_argument("scenario")
    s.add_argument("--plan")
    s.add_argument("--dt", type=float)
    s.add_argument("--saturation", choices=("none", "clip", "fail"))
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("certify", help="safety report for a plan")
    s.add_argument("scenario")
    s.add_argument("--plan")
    s.add_argument("--simulate", action="store_true", help="also check deviation, containment and inputs on a rollout")
    s.add_argument("--mode", choices=("conservative", "relaxed"))
    s.add_argument("--samples", type=int, default=2001)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("reproduce", help="run a bundled case study end to end")
    s.add_argument("case", choices=("table2",))
    s.add_argument("--scenario", help="override the bundled scenario file")
    s.add_argument("--dt", type=float)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_reproduce)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except errors.ContDefError as exc:
        print(json.dumps(_error_record(exc), default=_json_default), file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
