"""Planar team squeezing its containment triangle through a gap in a wall.

The VCS search finds the shortest sequence of grid-aligned triangles that stay
clear of the (inflated) wall with every stretch above the conservative floor.
Each merged leg is then timed by closed-loop rollouts.
"""

from __future__ import annotations

import numpy as np

from contdef import pipeline, safety
from contdef.scenario import parse_scenario


def main() -> None:
    ctx = pipeline.Context.build(parse_scenario(pipeline.bundled_scenario("wall_gap")))
    outcome = pipeline.build_plan(ctx)
    res, plan = outcome.search, outcome.plan
    print(f"search cost {res.cost:.1f} m, {res.expanded} expansions, {len(plan.durations)} legs")
    print("leg times:", np.round(plan.durations, 2).tolist())

    times = np.linspace(plan.t0, plan.t_final, 2001)
    lam = safety.in_scope_stretches(safety.plan_jacobians(plan, ctx.cfg, times), 2)
    k = int(np.argmin(lam[:, -1]))
    print(f"smallest stretch {lam[k, -1]:.3f} at t = {times[k]:.1f} s "
          f"(floor {ctx.params.lambda_cd_min:.3f})")

    traj = pipeline.simulate(ctx, plan)
    report = pipeline.certify(ctx, plan, traj)
    print("certificate:", "pass" if report.passed else "FAIL")
    for name, cond in report.conditions.items():
        print(f"  {name:<24} {'pass' if cond.passed else 'FAIL'}  margin {cond.margin:+.4f}")


if __name__ == "__main__":
    main()
