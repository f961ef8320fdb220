"""Random generators shared by the test modules."""

from __future__ import annotations

import numpy as np

from contdef.geometry import DeformationFeatures

HALF = np.pi / 2 - 0.05
FULL = np.pi - 0.05


def random_stretches(rng: np.random.Generator, k: int, gap: float = 0.05) -> list[float]:
    """Strictly decreasing stretches in [0.2, 5] separated by at least ``gap``."""
    while True:
        lam = np.sort(rng.uniform(0.2, 5.0, size=k))[::-1]
        if k == 1 or np.min(-np.diff(lam)) > gap:
            return [float(x) for x in lam]


def random_features(rng: np.random.Generator, n: int) -> DeformationFeatures:
    """Features inside the canonical chart the decompositions return.

    Stretch-direction angles stay in (-pi/2, pi/2), which fixes the eigenvector
    signs; rotation angles span their natural ranges.
    """
    d = rng.uniform(-100, 100, size=3)
    phi_r, psi_r = rng.uniform(-FULL, FULL, size=2)
    theta_r = rng.uniform(-HALF, HALF)
    if n == 1:
        (lam,) = random_stretches(rng, 1)
        return DeformationFeatures(1, lam, theta_r=theta_r, psi_r=psi_r, d1=d[0], d2=d[1], d3=d[2])
    if n == 2:
        l1, l2 = random_stretches(rng, 2)
        return DeformationFeatures(2, l1, l2, 1.0, 0.0, 0.0, rng.uniform(-HALF, HALF),
                                   phi_r, theta_r, psi_r, *d)
    l1, l2, l3 = random_stretches(rng, 3)
    phi_u, theta_u, psi_u = rng.uniform(-HALF, HALF, size=3)
    return DeformationFeatures(3, l1, l2, l3, phi_u, theta_u, psi_u, phi_r, theta_r, psi_r, *d)


def random_leader_refs(rng: np.random.Generator, n: int) -> np.ndarray:
    """Well-shaped reference leaders on the axis, plane or in space."""
    while True:
        pts = rng.uniform(-20, 20, size=(n + 1, 3))
        pts[:, n:] = 0.0
        edges = (pts[1:] - pts[0])[:, :n]
        sv = np.linalg.svd(edges, compute_uv=False)
        if sv.min() > 0.2 * sv.max() and sv.min() > 2.0:
            return pts


def column_config():
    """Agents strung along x at 5 m spacing with scattered cross offsets.

    Agents 1 and 2 share their cross offset, so the closest pair points along
    x and every pair is at least ``d_s`` apart along that direction.
    """
    from contdef.formation import ReferenceConfiguration

    cross = [(0, 0), (0, 0), (8, 0), (0, 8), (-6, -5), (3, -7), (-4, 6), (7, 7), (-8, 2), (5, -3), (-2, -8), (6, 4)]
    pos = {k + 1: (5.0 * k, y, z) for k, (y, z) in enumerate(cross)}
    return ReferenceConfiguration(3, pos, (1, 2, 3, 4), tuple(range(5, len(cross) + 1)))


COLUMN_VCS = np.array([[-20.0, -60.0, -60.0], [-20.0, 120.0, -60.0], [-20.0, -60.0, 120.0], [200.0, -30.0, -30.0]])


def random_grid_instance(rng, size=8, n_boxes=4):
    """Random ``size`` x ``size`` map with unit boxes and a unit-triangle VCS.

    Start sits in the lower-left corner, goal in the upper-right; boxes avoid
    both placements.
    """
    from contdef.planner import ObstacleMap

    ref = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
    start = ref + 0.0
    goal = ref + (size - 2.0)
    boxes = []
    while len(boxes) < n_boxes:
        c = rng.integers(0, size, 2).astype(float)
        lo, hi = c, c + 1.0
        if np.all(hi <= 3) or np.all(lo >= size - 3):
            continue
        boxes.append((lo, hi))
    ws = np.array([[0.0, 0.0], [float(size), float(size)]])
    return ObstacleMap(np.array(boxes), ws, 1.0), ref, start, goal
