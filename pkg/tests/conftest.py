from __future__ import annotations

import numpy as np
import pytest

from contdef import pipeline
from contdef.scenario import parse_scenario

# 16-vehicle reference positions as printed (two decimals)
TABLE2_ROUNDED = {
    1: (-30, -40, 0), 2: (-30, 40, 0), 3: (50, 0, 0), 4: (0, 0, 60),
    5: (-19.07, -18.70, 8.99), 6: (-19.43, 17.65, 5.16), 7: (25.05, -1.25, 10.56),
    8: (1.06, -4.30, 36.01), 9: (-6.03, -5.54, 12.77), 10: (-6.35, 1.94, 11.17),
    11: (-1.17, 2.65, 10.80), 12: (0.39, -5.87, 16.54), 13: (-2.55, -2.54, 13.56),
    14: (25, 40, 30), 15: (25, -40, 30), 16: (-55, 0, 30),
}

A_SIXTH = (0.5, 1 / 6, 1 / 6, 1 / 6)
B_ROW = (0.2, 0.2, 0.2, 0.4)
TABLE2_WEIGHTS = {
    5: ((1, 6, 8, 9), A_SIXTH),
    6: ((2, 5, 10, 11), A_SIXTH),
    7: ((3, 8, 11, 12), A_SIXTH),
    8: ((4, 5, 7, 12), A_SIXTH),
    9: ((5, 10, 12, 13), B_ROW),
    10: ((6, 9, 11, 13), B_ROW),
    11: ((6, 10, 7, 13), B_ROW),
    12: ((7, 8, 5, 13), B_ROW),
    13: ((9, 10, 11, 12), B_ROW),
    # boundary followers: leader coordinates of their auxiliary node
    14: ((1, 2, 3, 4), (-0.5, 0.5, 0.5, 0.5)),
    15: ((1, 2, 3, 4), (0.5, -0.5, 0.5, 0.5)),
    16: ((1, 2, 3, 4), (0.5, 0.5, -0.5, 0.5)),
}


@pytest.fixture(scope="session")
def table2_ctx() -> pipeline.Context:
    return pipeline.Context.build(parse_scenario(pipeline.bundled_scenario("table2")))


@pytest.fixture(scope="session")
def wall_ctx() -> pipeline.Context:
    return pipeline.Context.build(parse_scenario(pipeline.bundled_scenario("wall_gap")))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def table2_run(table2_ctx):
    """Full takeoff: plan and closed-loop trajectory at the default step."""
    plan = pipeline.build_plan(table2_ctx).plan
    return plan, pipeline.simulate(table2_ctx, plan)


def line_team():
    """Two leaders on the x axis and one follower between them."""
    from contdef import comms, formation

    cfg = formation.ReferenceConfiguration(1, {1: [0, 0, 0], 2: [10, 0, 0], 3: [4, 0, 0]}, (1, 2), (3,))
    return cfg, comms.compute_weights(cfg, comms.CommGraph({3: (1, 2)}))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        title, ok, elapsed, budget = results[k]
        terminalreporter.write_line(
            f"criterion {k}: {'pass' if ok else 'FAIL'}  {title}  [{elapsed:.2f} s, budget {budget:g} s]"
        )
