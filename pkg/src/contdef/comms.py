"""Communication graph, weight matrix and follower-leader mapping.

Node ordering inside every matrix is leaders, then followers, then auxiliary
nodes, each in the order stored in the configuration.

Sign convention: follower rows of ``W`` carry ``-1`` on the diagonal and the
barycentric weights off-diagonal, auxiliary rows are ``[alpha, 0, -I]``. The
reference positions then satisfy ``W z = 0`` on every axis, and eliminating the
auxiliary block gives ``A z_f + B z_l = 0`` with ``B = W_fl + W_fa W_al``.
Hence ``W_L = -A^{-1} B``; its rows sum to one.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import geometry
from .errors import (
    ContainmentViolated,
    InvalidConfiguration,
    MissingNeighbor,
    SingularA,
    Unreachable,
)
from .formation import ReferenceConfiguration, leader_expansion

COINCIDENCE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class CommGraph:
    """Reference in-neighbor lists for followers and auxiliary nodes."""

    in_neighbors: Mapping[int, tuple[int, ...]]

    def __post_init__(self):
        object.__setattr__(
            self, "in_neighbors", {int(k): tuple(int(j) for j in v) for k, v in self.in_neighbors.items()}
        )

    def neighbors(self, agent: int) -> tuple[int, ...]:
        return self.in_neighbors.get(agent, ())

    def edges(self) -> list[tuple[int, int]]:
        """Directed edges ``(j, i)`` meaning j sends to i."""
        return [(j, i) for i, nbrs in self.in_neighbors.items() for j in nbrs]


def is_coincident_follower(cfg: ReferenceConfiguration, graph: CommGraph, agent: int) -> bool:
    """A follower whose only in-neighbor is an auxiliary node at its own reference.

    Such a boundary follower reproduces the auxiliary node exactly, so its
    weight is one and its real weights are the node's leader coordinates.
    """
    nbrs = graph.neighbors(agent)
    return (
        agent in cfg.followers
        and len(nbrs) == 1
        and nbrs[0] in cfg.aux_positions
        and np.linalg.norm(cfg.position(agent) - cfg.aux_positions[nbrs[0]]) <= COINCIDENCE_TOL
    )


def check_graph_structure(cfg: ReferenceConfiguration, graph: CommGraph) -> None:
    """Neighbor-count and id checks.

    Raises:
        InvalidConfiguration: naming the first offending agent.
    """
    known = set(cfg.all_ids)
    for i in cfg.leaders:
        if graph.neighbors(i):
            raise InvalidConfiguration(f"leader {i} must not have in-neighbors")
    for h in cfg.aux_ids:
        if set(graph.neighbors(h)) != set(cfg.leaders) or len(graph.neighbors(h)) != cfg.n + 1:
            raise InvalidConfiguration(f"auxiliary node {h} must listen to exactly the leaders")
    for i in cfg.followers:
        nbrs = graph.neighbors(i)
        if is_coincident_follower(cfg, graph, i):
            continue
        if len(nbrs) != cfg.n + 1:
            raise InvalidConfiguration(f"follower {i} has {len(nbrs)} in-neighbors, needs {cfg.n + 1}")
        if len(set(nbrs)) != len(nbrs):
            raise InvalidConfiguration(f"follower {i} lists a repeated in-neighbor")
        if i in nbrs:
            raise InvalidConfiguration(f"follower {i} lists itself as in-neighbor")
        unknown = [j for j in nbrs if j not in known]
        if unknown:
            raise InvalidConfiguration(f"follower {i} references unknown ids {unknown}")
    extra = [k for k in graph.in_neighbors if k not in known]
    if extra:
        raise InvalidConfiguration(f"in-neighbor lists given for unknown ids {extra}")


def unreachable_nodes(cfg: ReferenceConfiguration, graph: CommGraph) -> list[int]:
    """Non-leader nodes with no directed path from the leader set (BFS)."""
    out: dict[int, list[int]] = {i: [] for i in cfg.all_ids}
    for j, i in graph.edges():
        out.setdefault(j, []).append(i)
    seen = set(cfg.leaders)
    queue = deque(cfg.leaders)
    while queue:
        j = queue.popleft()
        for i in out.get(j, ()):
            if i not in seen:
                seen.add(i)
                queue.append(i)
    return sorted(i for i in cfg.followers + cfg.aux_ids if i not in seen)


@dataclass(frozen=True, eq=False)
class SpectralReport:
    max_real: float
    eigenvalues: NDArray[np.complex128]

    @property
    def passed(self) -> bool:
        return self.max_real < 0.0


def verify_hurwitz(A: ArrayLike) -> SpectralReport:
    """Largest real part of the spectrum of ``A``; passes when negative."""
    a = np.atleast_2d(np.asarray(A, dtype=float))
    eig = np.linalg.eigvals(a) if a.size else np.zeros(0, dtype=complex)
    max_real = float(np.max(eig.real)) if eig.size else -np.inf
    return SpectralReport(max_real, eig)


@dataclass(frozen=True, eq=False)
class WeightModel:
    """Weights, the partitioned weight matrix and the leader mapping.

    Attributes:
        order: node ids in matrix order (leaders, followers, aux).
        weights: reference weights ``w_ij`` per follower and aux node.
        W: full weight matrix.
        A, B: follower block and the aux-eliminated leader block.
        W_L: follower rows of leader coordinates, ``-A^{-1} B``.
        real_weights: ``varpi_ij`` over real in-neighbors per follower.
        real_in_neighbors: ids carrying a real weight, per follower.
        coincident: boundary followers that reproduce an aux node.
    """

    cfg: ReferenceConfiguration
    graph: CommGraph
    order: tuple[int, ...]
    weights: dict[int, dict[int, float]]
    W: NDArray[np.float64]
    A: NDArray[np.float64]
    B: NDArray[np.float64]
    W_L: NDArray[np.float64]
    real_weights: dict[int, dict[int, float]]
    real_in_neighbors: dict[int, tuple[int, ...]]
    coincident: frozenset[int] = field(default_factory=frozenset)

    @property
    def leaders(self) -> tuple[int, ...]:
        return self.cfg.leaders

    @property
    def followers(self) -> tuple[int, ...]:
        return self.cfg.followers

    @property
    def L(self) -> NDArray[np.float64]:
        """Real-agent matrix with ``-I`` leader rows and ``[B, A]`` follower rows."""
        nl, nf = len(self.leaders), len(self.followers)
        out = np.zeros((nl + nf, nl + nf))
        out[:nl, :nl] = -np.eye(nl)
        out[nl:, :nl] = self.B
        out[nl:, nl:] = self.A
        return out

    def real_weight_matrix(self) -> NDArray[np.float64]:
        """``N x N`` matrix of real weights in real-agent order; leader rows are zero."""
        idx = {i: k for k, i in enumerate(self.cfg.real_ids)}
        out = np.zeros((len(idx), len(idx)))
        for i, row in self.real_weights.items():
            for j, w in row.items():
                out[idx[i], idx[j]] = w
        return out

    def leader_coordinates(self, agent: int) -> NDArray[np.float64]:
        """Row of ``W_L`` for a follower, unit row for a leader."""
        if agent in self.leaders:
            row = np.zeros(len(self.leaders))
            row[self.leaders.index(agent)] = 1.0
            return row
        return self.W_L[self.followers.index(agent)]


def compute_weights(cfg: ReferenceConfiguration, graph: CommGraph) -> WeightModel:
    """Build the weight model from reference geometry and the graph.

    Raises:
        InvalidConfiguration: structural graph violation.
        Unreachable: some follower or aux node has no path from the leaders.
        ContainmentViolated: a follower is not strictly inside its neighbors.
        SingularA: the follower block cannot be inverted.
    """
    check_graph_structure(cfg, graph)
    lost = unreachable_nodes(cfg, graph)
    if lost:
        raise Unreachable(lost)

    weights: dict[int, dict[int, float]] = {}
    coincident = set()
    for h in cfg.aux_ids:
        alpha = leader_expansion(cfg, h)
        weights[h] = {j: float(a) for j, a in zip(cfg.leaders, alpha)}
    for i in cfg.followers:
        if is_coincident_follower(cfg, graph, i):
            coincident.add(i)
            weights[i] = {graph.neighbors(i)[0]: 1.0}
            continue
        nbrs = graph.neighbors(i)
        try:
            w = geometry.barycentric(cfg.ref_array(nbrs), cfg.position(i), cfg.n)
        except geometry.DegenerateSimplex as exc:
            raise ContainmentViolated(i, None) from exc
        if np.any(w <= 0.0):
            raise ContainmentViolated(i, tuple(float(x) for x in w))
        weights[i] = {j: float(x) for j, x in zip(nbrs, w)}

    order = cfg.all_ids
    idx = {i: k for k, i in enumerate(order)}
    size = len(order)
    W = -np.eye(size)
    for i, row in weights.items():
        for j, w in row.items():
            W[idx[i], idx[j]] += w
    nl, nf = len(cfg.leaders), len(cfg.followers)
    fl = W[nl : nl + nf, :nl]
    A = W[nl : nl + nf, nl : nl + nf].copy()
    fa = W[nl : nl + nf, nl + nf :]
    al = W[nl + nf :, :nl]
    B = fl + fa @ al
    if nf:
        if np.linalg.cond(A) > 1e12:
            raise SingularA("follower weight block is singular")
        W_L = np.linalg.solve(A, -B)
    else:
        W_L = np.zeros((0, nl))

    real_weights: dict[int, dict[int, float]] = {}
    for i in cfg.followers:
        row: dict[int, float] = {}
        for j, w in weights[i].items():
            if j in cfg.aux_positions:
                for k, a in weights[j].items():
                    row[k] = row.get(k, 0.0) + w * a
            else:
                row[j] = row.get(j, 0.0) + w
        real_weights[i] = row
    real_in = {i: tuple(row) for i, row in real_weights.items()}
    return WeightModel(
        cfg, graph, order, weights, W, A, B, W_L, real_weights, real_in, frozenset(coincident)
    )


def follower_desired_from_leaders(model: WeightModel, leader_values: ArrayLike) -> NDArray[np.float64]:
    """``W_L @ values`` for an ``(n+1,)`` or ``(n+1, k)`` array of leader values."""
    return model.W_L @ np.asarray(leader_values, dtype=float)


def local_desired(
    model: WeightModel, follower: int, neighbor_positions: Mapping[int, ArrayLike]
) -> NDArray[np.float64]:
    """Real-weight combination of a follower's real in-neighbor positions.

    Raises:
        MissingNeighbor: a real in-neighbor is absent from ``neighbor_positions``.
    """
    row = model.real_weights[follower]
    missing = [j for j in row if j not in neighbor_positions]
    if missing:
        raise MissingNeighbor(f"follower {follower} lacks positions for {missing}")
    return sum(w * np.asarray(neighbor_positions[j], dtype=float) for j, w in row.items())


def iterate_real_weights(
    model: WeightModel, leader_positions: ArrayLike, tol: float = 1e-12, max_iter: int = 100_000
) -> NDArray[np.float64]:
    """Jacobi iteration of the real-weight consensus to its fixed point."""
    omega = model.real_weight_matrix()
    nl = len(model.leaders)
    z = np.zeros((omega.shape[0], 3))
    z[:nl] = np.asarray(leader_positions, dtype=float)
    for _ in range(max_iter):
        nxt = z.copy()
        nxt[nl:] = omega[nl:] @ z
        if np.max(np.abs(nxt - z)) < tol:
            return nxt
        z = nxt
    return z


def real_weights_positive(model: WeightModel) -> dict[int, bool]:
    """Per follower: real weights positive (coincident followers are exempt)."""
    return {
        i: (i in model.coincident) or all(w > 0.0 for w in row.values())
        for i, row in model.real_weights.items()
    }


def random_formation(
    rng: np.random.Generator,
    n: int = 3,
    n_followers: int = 10,
    n_aux: int = 0,
    scale: float = 10.0,
    min_weight: float = 0.05,
) -> tuple[ReferenceConfiguration, CommGraph]:
    """Random configuration and graph that satisfy every structural assumption.

    Weights are drawn first and positions follow from the fixed point, so
    containment holds by construction. Follower ``k`` always has at least one
    in-neighbor among the leaders or earlier followers, which gives
    reachability.
    """
    for _ in range(1000):
        leaders = tuple(range(1, n + 2))
        followers = tuple(range(n + 2, n + 2 + n_followers))
        aux = tuple(range(n + 2 + n_followers, n + 2 + n_followers + n_aux))
        lead_pos = rng.normal(scale=scale, size=(n + 1, 3))
        lead_pos[:, n:] = 0.0
        aux_pos = rng.normal(scale=2 * scale, size=(n_aux, 3))
        aux_pos[:, n:] = 0.0
        nbrs: dict[int, tuple[int, ...]] = {h: leaders for h in aux}
        wts: dict[int, NDArray[np.float64]] = {}
        for k, i in enumerate(followers):
            pool = [j for j in leaders + followers + aux if j != i]
            anchor_pool = list(leaders) + list(followers[:k])
            anchor = int(rng.choice(anchor_pool))
            rest = [j for j in pool if j != anchor]
            pick = [anchor] + [int(j) for j in rng.choice(rest, size=n, replace=False)]
            nbrs[i] = tuple(pick)
            w = rng.uniform(min_weight, 1.0, size=n + 1)
            wts[i] = w / w.sum()
        # solve for follower positions consistent with the drawn weights
        index = {i: k for k, i in enumerate(followers)}
        try:
            lead_cfg_pos = {i: p for i, p in zip(leaders, lead_pos)}
            alpha_aux = {}
            for h, p in zip(aux, aux_pos):
                alpha_aux[h] = geometry.barycentric(lead_pos, p, n)
        except (geometry.DegenerateSimplex, geometry.OffHyperplane):
            continue
        M = -np.eye(n_followers)
        rhs = np.zeros((n_followers, 3))
        for i in followers:
            for j, w in zip(nbrs[i], wts[i]):
                if j in index:
                    M[index[i], index[j]] += w
                elif j in lead_cfg_pos:
                    rhs[index[i]] -= w * lead_cfg_pos[j]
                else:
                    rhs[index[i]] -= w * (alpha_aux[j] @ lead_pos)
        fpos = np.linalg.solve(M, rhs)
        positions = {**lead_cfg_pos, **{i: p for i, p in zip(followers, fpos)}}
        try:
            cfg = ReferenceConfiguration(n, positions, leaders, followers, dict(zip(aux, aux_pos)))
            graph = CommGraph(nbrs)
            everything = {**positions, **dict(zip(aux, aux_pos))}
            ok = all(geometry.simplex_rank([everything[j] for j in nbrs[i]]) == n for i in followers)
            if ok and np.min(_pairwise(np.array(list(everything.values())))) > 1e-3 * scale:
                return cfg, graph
        except InvalidConfiguration:
            continue
    raise RuntimeError("could not draw a non-degenerate random formation")


def _pairwise(pts: NDArray[np.float64]) -> NDArray[np.float64]:
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    return dist[np.triu_indices(len(pts), 1)]


__all__ = [
    "CommGraph",
    "SpectralReport",
    "WeightModel",
    "check_graph_structure",
    "compute_weights",
    "follower_desired_from_leaders",
    "is_coincident_follower",
    "iterate_real_weights",
    "local_desired",
    "random_formation",
    "real_weights_positive",
    "unreachable_nodes",
    "verify_hurwitz",
]
