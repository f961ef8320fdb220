"""End-to-end runs on a scenario: validation, planning, simulation and certification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from . import comms, dynamics, geometry, planner, safety
from .errors import ContDefError
from .formation import ReferenceConfiguration, alpha_matrix
from .scenario import Scenario, parse_scenario


def bundled_scenario(name: str) -> Path:
    """Path of a scenario file shipped with the package (``table2``, ``wall_gap``)."""
    return Path(str(resources.files("contdef") / "data" / f"{name}.scenario"))


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"check": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class Context:
    """Runtime objects built once from a scenario."""

    scenario: Scenario
    cfg: ReferenceConfiguration
    model: comms.WeightModel
    params: safety.SafetyParameters
    gains: dynamics.GainSet
    bounds: dynamics.InputBounds

    @classmethod
    def build(cls, sc: Scenario) -> "Context":
        cfg = sc.config()
        return cls(sc, cfg, sc.weight_model(cfg), sc.safety_params(cfg), sc.gain_set(), sc.bounds())


def validate(sc: Scenario) -> list[Check]:
    """Assumption checks on a parsed scenario, one entry per assumption."""
    checks: list[Check] = []
    cfg = sc.config()
    q = cfg.Q_s
    checks.append(Check("initial map orthogonal", bool(np.allclose(q.T @ q, np.eye(3), atol=1e-9)),
                        f"det Q_s = {np.linalg.det(q):.6g}"))
    rank = geometry.simplex_rank(cfg.leader_refs)
    checks.append(Check("leader simplex", rank == cfg.n, f"rank {rank}, need {cfg.n}"))
    graph = sc.graph()
    try:
        comms.check_graph_structure(cfg, graph)
        lost = comms.unreachable_nodes(cfg, graph)
        checks.append(Check("graph structure and reachability", not lost,
                            f"unreachable from leaders: {lost}" if lost else "every node reachable"))
    except ContDefError as exc:
        checks.append(Check("graph structure and reachability", False, str(exc)))
        return checks
    bad = []
    for i in cfg.followers:
        if comms.is_coincident_follower(cfg, graph, i):
            continue
        w = geometry.barycentric(cfg.ref_array(graph.neighbors(i)), cfg.position(i), cfg.n)
        if np.any(w <= 0):
            bad.append(f"follower {i} not strictly inside its in-neighbors (weights {np.round(w, 4).tolist()})")
    checks.append(Check("in-neighbor containment", not bad, "; ".join(bad) or "all followers enclosed"))
    if bad:
        return checks
    try:
        model = comms.compute_weights(cfg, graph)
        rep = comms.verify_hurwitz(model.A)
        checks.append(Check("follower dynamics Hurwitz", rep.passed, f"max Re eig = {rep.max_real:.6g}"))
    except ContDefError as exc:
        checks.append(Check("follower dynamics Hurwitz", False, str(exc)))
    if sc.plan.get("mode") == "OF":
        try:
            params = sc.safety_params(cfg)
            plan = of_plan_from_scenario(sc, params, [1.0] * (len(sc.plan["waypoints"]) - 1)
                                         if sc.plan["durations"] == "auto" else None)
            times = np.linspace(plan.t0, plan.t_final, 501)
            dets = np.linalg.det(safety.plan_jacobians(plan, cfg, times))
            checks.append(Check("leader simplex along plan", bool(np.all(dets > 0)),
                                f"min det Q = {dets.min():.6g}"))
        except ContDefError as exc:
            checks.append(Check("leader simplex along plan", False, str(exc)))
    else:
        ok = all(geometry.simplex_rank(np.array(v)) == cfg.n for v in (sc.plan["start"], sc.plan["goal"]))
        checks.append(Check("leader simplex along plan", ok, "start and goal VCS non-degenerate"))
    return checks


# --------------------------------------------------------------------------- planning


@dataclass
class PlanOutcome:
    plan: planner.Plan
    search: planner.AStarResult | None = None
    segment_times: list[float] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        p = self.plan
        out: dict[str, Any] = {
            "mode": p.mode,
            "n": p.n,
            "t0": p.t0,
            "waypoints": p.waypoints.tolist(),
            "durations": p.durations.tolist(),
            "deformation_angles": list(p.deformation_angles),
        }
        if p.vcs_ref is not None:
            out["vcs_ref"] = p.vcs_ref.tolist()
        if self.search is not None:
            out["search"] = {
                "cost": self.search.cost,
                "expanded": self.search.expanded,
                "placements": len(self.search.path),
                "heuristic_checks": self.search.heuristic_checks,
                "heuristic_violations": self.search.heuristic_violations,
                "min_stretch": float(self.search.stretches.min()),
            }
        return out


def plan_from_dict(d: dict[str, Any]) -> planner.Plan:
    """Inverse of :meth:`PlanOutcome.to_dict` (the plan part)."""
    vcs = d.get("vcs_ref")
    return planner.Plan(
        d["mode"], int(d["n"]), np.array(d["waypoints"]), np.array(d["durations"]), float(d.get("t0", 0.0)),
        tuple(d.get("deformation_angles", (0.0, 0.0, 0.0))), None if vcs is None else np.array(vcs),
    )


def of_plan_from_scenario(sc: Scenario, params, durations=None) -> planner.Plan:
    wps = np.array(sc.plan["waypoints"], dtype=float)
    dur = sc.plan["durations"] if durations is None else durations
    return planner.Plan("OF", sc.n, wps, np.array(dur, dtype=float), sc.timing["t0"],
                        sc.deformation_angles(params))


def build_plan(ctx: Context) -> PlanOutcome:
    """Turn the scenario's plan request into a timed plan.

    OF requests interpolate the given waypoints. OL requests run the VCS
    search and merge collinear moves. ``"auto"`` timing picks each segment's
    minimum feasible travel time.
    """
    sc = ctx.scenario
    req = sc.plan
    timing = sc.timing
    if req["mode"] == "OF":
        angles = sc.deformation_angles(ctx.params)
        wps = np.array(req["waypoints"], dtype=float)
        if req["durations"] == "auto":
            dur = [
                planner.min_travel_time(
                    wps[k], wps[k + 1], ctx.cfg, ctx.model, ctx.gains, ctx.params, ctx.bounds,
                    mode="OF", deformation_angles=angles, T_cap=timing["segment_cap"], dt=timing["dt"],
                )
                for k in range(len(wps) - 1)
            ]
        else:
            dur = list(req["durations"])
        plan = planner.Plan("OF", sc.n, wps, np.array(dur), timing["t0"], angles)
        return PlanOutcome(plan, None, list(map(float, dur)))

    limits = planner.SearchLimits.from_safety(ctx.params, req.get("stretch_bound", "conservative"))
    if "lambda_ceiling" in req:
        limits = planner.SearchLimits(limits.lambda_floor, limits.inflation, req["lambda_ceiling"])
    vcs_ref = sc.vcs_array()
    result = planner.astar_plan(sc.obstacle_map(), vcs_ref, np.array(req["start"]), np.array(req["goal"]), limits)
    wps = planner.pad_vertices(result.waypoints())
    ol = [planner.vertices_to_ol(sc.n, w) for w in wps]
    if req["segment_time"] == "auto":
        dur = [
            planner.min_travel_time(
                ol[k], ol[k + 1], ctx.cfg, ctx.model, ctx.gains, ctx.params, ctx.bounds,
                mode="OL", vcs_ref=vcs_ref, T_cap=timing["segment_cap"], dt=timing["dt"],
            )
            for k in range(len(ol) - 1)
        ]
    else:
        dur = [float(req["segment_time"])] * (len(ol) - 1)
    plan = planner.Plan("OL", sc.n, np.array(ol), np.array(dur), timing["t0"], vcs_ref=vcs_ref)
    return PlanOutcome(plan, result, list(map(float, dur)))


# --------------------------------------------------------------------------- simulation and certification


def simulate(ctx: Context, plan: planner.Plan, **kw) -> dynamics.TeamTrajectory:
    t = ctx.scenario.timing
    opts = {"dt": t["dt"], "record_every": int(t["record_every"]), "bounds": ctx.bounds}
    opts.update(kw)
    return dynamics.simulate_team(ctx.cfg, ctx.model, plan, ctx.gains, **opts)


def certify(
    ctx: Context,
    plan: planner.Plan,
    trajectory: dynamics.TeamTrajectory | None = None,
    mode: str | None = None,
    samples: int = 2001,
) -> safety.SafetyReport:
    """Safety report over ``samples`` plan times (and the trajectory, if given).

    ``mode`` defaults to relaxed for OF plans whose deformation angles equal the
    pinned reference ones and to conservative otherwise.
    """
    if mode is None:
        pinned = plan.mode == "OF" and np.allclose(plan.deformation_angles, ctx.params.deformation_angles)
        mode = "relaxed" if pinned else "conservative"
    times = np.linspace(plan.t0, plan.t_final, samples)
    return safety.certify(
        ctx.cfg, plan, ctx.params, times, ctx.scenario.vcs_array(), trajectory,
        ctx.bounds if trajectory is not None else None, mode,
    )


def trajectory_rows(traj: dynamics.TeamTrajectory) -> list[list[str]]:
    """CSV rows (no header) in time-major, id-minor order."""
    rows = []
    for k, t in enumerate(traj.times):
        for a, agent in enumerate(traj.ids):
            p, dsd, u = traj.states[k, a, 0:3], traj.desired[k, a], traj.inputs[k, a]
            rows.append([f"{t:.6f}", str(agent)] + [f"{x:.9g}" for x in (*p, *dsd, traj.deviation[k, a], *u)])
    return rows


CSV_HEADER = ["time", "agent-id", "x", "y", "z", "x_HT", "y_HT", "z_HT", "deviation", "u_T", "u_phi", "u_theta"]


def feature_rows(cfg: ReferenceConfiguration, leader_positions: NDArray[np.float64], times, u1_hint=None):
    """Decomposed features for each sample of a leader trajectory."""
    refs = cfg.leader_refs
    out = []
    for t, now in zip(times, leader_positions):
        f = geometry.decompose(refs, now, u1_hint=u1_hint)
        out.append({"time": float(t), **f.as_dict()})
    return out


# --------------------------------------------------------------------------- case study


def reproduce_table2(path: str | Path | None = None, dt: float | None = None) -> dict[str, Any]:
    """Run the bundled 3-D takeoff end to end and collect the headline numbers."""
    sc = parse_scenario(path or bundled_scenario("table2"))
    ctx = Context.build(sc)
    outcome = build_plan(ctx)
    plan = outcome.plan
    kw = {} if dt is None else {"dt": dt}
    traj = simulate(ctx, plan, **kw)
    report = certify(ctx, plan, traj)
    sup, agent, when = traj.sup_deviation()
    desired = traj.desired
    min_gap, pair, t_gap = _min_pair_distance(desired, traj.ids, traj.times)
    p = ctx.params
    rows = {}
    for i in ctx.cfg.followers:
        rows[i] = {j: round(w, 6) for j, w in ctx.model.real_weights[i].items()} if i in ctx.model.coincident \
            else {j: round(w, 6) for j, w in ctx.model.weights[i].items()}
    a = ctx.model.A
    return {
        "d_s": p.d_s,
        "pair": list(p.pair),
        "theta_u0": p.theta_u0,
        "psi_u0": p.psi_u0,
        "d_b": p.d_b,
        "delta_max": p.delta_max,
        "delta": p.delta,
        "lambda_min": p.lambda_min,
        "max_re_eig_A": float(np.linalg.eigvals(a).real.max()),
        "sup_deviation": sup,
        "sup_deviation_agent": agent,
        "sup_deviation_time": when,
        "deviation_gate": 0.67,
        "deviation_pass": bool(sup <= 0.67),
        "min_desired_distance": min_gap,
        "min_desired_pair": list(pair),
        "min_desired_time": t_gap,
        "separation_pass": bool(min_gap >= 2 * p.epsilon),
        "max_input": traj.max_input.max(axis=0).tolist(),
        "thrust_range": [float(traj.thrust_range[:, 0].min()), float(traj.thrust_range[:, 1].max())],
        "lambda1_final": float(plan.waypoints[-1][0]),
        "safety_passed": report.passed,
        "weights": rows,
        "pass": bool(sup <= 0.67 and min_gap >= 2 * p.epsilon and report.passed),
    }


def _min_pair_distance(points: NDArray[np.float64], ids, times) -> tuple[float, tuple[int, int], float]:
    best, pair, when = math.inf, (0, 0), 0.0
    n = points.shape[1]
    iu = np.triu_indices(n, 1)
    for k in range(points.shape[0]):
        d = np.linalg.norm(points[k, :, None] - points[k, None], axis=-1)[iu]
        j = int(np.argmin(d))
        if d[j] < best:
            best, pair, when = float(d[j]), (ids[iu[0][j]], ids[iu[1][j]]), float(times[k])
    return best, pair, when


__all__ = [
    "CSV_HEADER",
    "Check",
    "Context",
    "PlanOutcome",
    "build_plan",
    "bundled_scenario",
    "certify",
    "feature_rows",
    "plan_from_dict",
    "reproduce_table2",
    "simulate",
    "trajectory_rows",
    "validate",
]
