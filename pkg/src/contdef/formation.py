"""Reference configurations and whole-team homogeneous maps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import geometry
from .errors import InvalidConfiguration, SingularTransform

ORTHO_TOL = 1e-9


def _as_point(p: ArrayLike) -> NDArray[np.float64]:
    arr = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(arr)):
        raise InvalidConfiguration(f"non-finite position {p!r}")
    return arr


@dataclass(frozen=True, eq=False)
class ReferenceConfiguration:
    """Agent sets, reference positions and the initial map of a team.

    Attributes:
        n: deformation dimension (1, 2 or 3).
        positions: reference position of every real agent.
        leaders: ordered leader ids, ``n + 1`` of them.
        followers: follower ids.
        aux_positions: reference positions of auxiliary (virtual) nodes.
        Q_s: orthogonal Jacobian of the initial map.
        d_init: displacement of the initial map.
    """

    n: int
    positions: Mapping[int, NDArray[np.float64]]
    leaders: tuple[int, ...]
    followers: tuple[int, ...]
    aux_positions: Mapping[int, NDArray[np.float64]] = field(default_factory=dict)
    Q_s: NDArray[np.float64] = field(default_factory=lambda: np.eye(3))
    d_init: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "positions", {int(k): _as_point(v) for k, v in self.positions.items()})
        object.__setattr__(self, "aux_positions", {int(k): _as_point(v) for k, v in self.aux_positions.items()})
        object.__setattr__(self, "leaders", tuple(int(i) for i in self.leaders))
        object.__setattr__(self, "followers", tuple(int(i) for i in self.followers))
        object.__setattr__(self, "Q_s", np.asarray(self.Q_s, dtype=float).reshape(3, 3))
        object.__setattr__(self, "d_init", np.asarray(self.d_init, dtype=float).reshape(3))
        self.validate()

    # ------------------------------------------------------------------ accessors

    @property
    def real_ids(self) -> tuple[int, ...]:
        return self.leaders + self.followers

    @property
    def aux_ids(self) -> tuple[int, ...]:
        return tuple(self.aux_positions)

    @property
    def all_ids(self) -> tuple[int, ...]:
        return self.real_ids + self.aux_ids

    def position(self, agent: int) -> NDArray[np.float64]:
        if agent in self.positions:
            return self.positions[agent]
        if agent in self.aux_positions:
            return self.aux_positions[agent]
        raise KeyError(f"unknown agent {agent}")

    def ref_array(self, ids: Sequence[int] | None = None) -> NDArray[np.float64]:
        """Stack reference positions of ``ids`` (default: real agents) as rows."""
        ids = self.real_ids if ids is None else ids
        return np.array([self.position(i) for i in ids])

    @property
    def leader_refs(self) -> NDArray[np.float64]:
        return self.ref_array(self.leaders)

    def initial_positions(self) -> NDArray[np.float64]:
        """Initial positions ``Q_s r0 + d_init`` of the real agents."""
        return geometry.apply(self.Q_s, self.d_init, self.ref_array())

    # ------------------------------------------------------------------ checks

    def validate(self) -> None:
        """Raise :class:`InvalidConfiguration` on any structural violation."""
        if self.n not in (1, 2, 3):
            raise InvalidConfiguration(f"n must be 1, 2 or 3, got {self.n}")
        if len(self.leaders) != self.n + 1:
            raise InvalidConfiguration(f"need {self.n + 1} leaders, got {len(self.leaders)}")
        ids = list(self.leaders) + list(self.followers) + list(self.aux_positions)
        if len(set(ids)) != len(ids):
            raise InvalidConfiguration("agent ids must be unique across leaders, followers and aux nodes")
        missing = [i for i in self.real_ids if i not in self.positions]
        extra = [i for i in self.positions if i not in self.real_ids]
        if missing or extra:
            raise InvalidConfiguration(f"positions missing for {missing}, unassigned ids {extra}")
        if geometry.simplex_rank(self.leader_refs) != self.n:
            raise InvalidConfiguration(f"leaders do not form a {self.n}-D simplex")
        if not np.allclose(self.Q_s.T @ self.Q_s, np.eye(3), atol=ORTHO_TOL):
            raise InvalidConfiguration("initial Jacobian Q_s must be orthogonal")
        pts = self.ref_array(ids)
        if self.n == 1 and np.abs(pts[:, 1:]).max() > geometry.HYPERPLANE_TOL:
            raise InvalidConfiguration("n=1 requires every reference position on the x axis")
        if self.n == 2 and np.abs(pts[:, 2]).max() > geometry.HYPERPLANE_TOL:
            raise InvalidConfiguration("n=2 requires every reference position in the z = 0 plane")


@dataclass(frozen=True, eq=False)
class TeamSnapshot:
    """Positions of the real agents at one time."""

    time: float
    positions: dict[int, NDArray[np.float64]]

    def array(self, ids: Sequence[int]) -> NDArray[np.float64]:
        return np.array([self.positions[i] for i in ids])


def apply_transform(
    cfg: ReferenceConfiguration, Q: ArrayLike, d: ArrayLike, time: float = 0.0
) -> TeamSnapshot:
    """Desired positions ``Q r_i0 + d`` for every real agent.

    Raises:
        SingularTransform: ``Q`` is numerically singular.
    """
    q = np.asarray(Q, dtype=float).reshape(3, 3)
    det = np.linalg.det(q)
    if abs(det) <= 1e-12 * max(np.linalg.norm(q, 2) ** 3, np.finfo(float).tiny):
        raise SingularTransform(f"det Q = {det:.3g}")
    pts = geometry.apply(q, d, cfg.ref_array())
    return TeamSnapshot(time, {i: p for i, p in zip(cfg.real_ids, pts)})


def leader_expansion(cfg: ReferenceConfiguration, agent: int) -> NDArray[np.float64]:
    """Barycentric coordinates of an agent's reference with respect to the leaders.

    Entries may be negative: agents outside the leading simplex are allowed.
    """
    if agent in cfg.leaders:
        raise ValueError(f"agent {agent} is a leader")
    return geometry.barycentric(cfg.leader_refs, cfg.position(agent), cfg.n)


def alpha_matrix(cfg: ReferenceConfiguration, ids: Sequence[int] | None = None) -> NDArray[np.float64]:
    """Rows of leader coordinates; leaders map to unit rows."""
    ids = cfg.real_ids if ids is None else ids
    out = np.zeros((len(ids), cfg.n + 1))
    for row, i in enumerate(ids):
        if i in cfg.leaders:
            out[row, cfg.leaders.index(i)] = 1.0
        else:
            out[row] = leader_expansion(cfg, i)
    return out


__all__ = [
    "ReferenceConfiguration",
    "TeamSnapshot",
    "alpha_matrix",
    "apply_transform",
    "leader_expansion",
]
