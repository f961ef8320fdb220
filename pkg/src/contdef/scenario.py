"""Scenario documents: JSON text describing a team, its graph, limits and a plan request.

Layout (all lengths in meters, times in seconds, angles in radians)::

    {
      "metadata":   {"name": str, "n": 1|2|3, "seed": int},
      "agents":     [{"id": int, "role": "leader"|"follower"|"aux", "position": [x, y, z]}, ...],
      "comm_graph": {"<id>": [in-neighbor ids], ...},
      "initial_transform": {"Q": 3x3, "d": [x, y, z]},            (optional)
      "vcs":        [[x, y, z], ...]  (n+1 vertices),
      "obstacles":  {"workspace": [lo, hi], "resolution": g,
                     "boxes": [{"min": [...], "max": [...]}, ...]},  (optional)
      "safety":     {"epsilon": e, and at most one of "delta", "lambda_min", "lambda_cd_min"},
      "gains":      {"gamma": [4 values], "Xi": 0..4, "k_psi": a, "k_psi_dot": b},
      "input_bounds": {"u_T": .., "u_phi": .., "u_theta": .., "F_min": .., "F_max": .., "tilt_max": ..},
      "plan":       {"mode": "OF", "waypoints": [[...], ...], "durations": [...] | "auto",
                     "deformation_angles": "reference" | [phi, theta, psi]}
                  | {"mode": "OL", "start": vertices, "goal": vertices,
                     "segment_time": T | "auto", "stretch_bound": "conservative"|"relaxed",
                     "lambda_ceiling": c},
      "timing":     {"dt": .., "segment_cap": .., "t0": .., "record_every": ..}
    }

Boxes and the workspace use the first ``n`` coordinates. Degree-valued keys are
rejected outright.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from . import comms, dynamics, planner, safety
from .errors import ContDefError, InvalidConfiguration, ParseError, SchemaError
from .formation import ReferenceConfiguration

SECTIONS = (
    "metadata", "agents", "comm_graph", "initial_transform", "vcs", "obstacles",
    "safety", "gains", "input_bounds", "plan", "timing",
)
REQUIRED = ("metadata", "agents", "comm_graph", "vcs", "safety", "plan")
ROLES = ("leader", "follower", "aux")
DEFAULT_TIMING = {"dt": 0.005, "segment_cap": 4096.0, "t0": 0.0, "record_every": 20}


class _Collector:
    def __init__(self):
        self.errors: list[tuple[str, str]] = []

    def add(self, path: str, msg: str) -> None:
        self.errors.append((path, msg))

    def number(self, obj: dict, key: str, path: str, *, positive=False, required=True, default=None):
        if key not in obj:
            if required:
                self.add(f"{path}.{key}", "missing")
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.add(f"{path}.{key}", f"expected a finite number, got {v!r}")
            return default
        if positive and not v > 0:
            self.add(f"{path}.{key}", f"must be positive, got {v}")
            return default
        return float(v)

    def vector(self, v: Any, length: int | None, path: str):
        ok = isinstance(v, list) and all(
            isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) for x in v
        )
        if not ok or (length is not None and len(v) != length):
            want = f"a list of {length} numbers" if length else "a list of numbers"
            self.add(path, f"expected {want}")
            return None
        return [float(x) for x in v]

    def matrix(self, v: Any, rows: int, cols: int, path: str):
        if not isinstance(v, list) or len(v) != rows:
            self.add(path, f"expected {rows} rows")
            return None
        out = [self.vector(r, cols, f"{path}[{k}]") for k, r in enumerate(v)]
        return None if any(r is None for r in out) else out


def _degree_keys(obj: Any, path: str, col: _Collector) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            if isinstance(k, str) and ("deg" in k.lower()):
                col.add(f"{path}.{k}", "angles must be given in radians; degree fields are not accepted")
            _degree_keys(v, f"{path}.{k}", col)
    elif isinstance(obj, list):
        for k, v in enumerate(obj):
            _degree_keys(v, f"{path}[{k}]", col)


@dataclass
class Scenario:
    """A validated scenario with builders for the runtime objects."""

    name: str
    n: int
    seed: int
    agents: list[dict[str, Any]]
    comm_graph: dict[int, tuple[int, ...]]
    vcs: list[list[float]]
    safety: dict[str, float]
    plan: dict[str, Any]
    initial_transform: dict[str, Any] | None = None
    obstacles: dict[str, Any] | None = None
    gains: dict[str, Any] = field(default_factory=dict)
    input_bounds: dict[str, float] = field(default_factory=dict)
    timing: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TIMING))

    # ------------------------------------------------------------------ builders

    def config(self) -> ReferenceConfiguration:
        pos = {a["id"]: a["position"] for a in self.agents if a["role"] != "aux"}
        aux = {a["id"]: a["position"] for a in self.agents if a["role"] == "aux"}
        leaders = tuple(a["id"] for a in self.agents if a["role"] == "leader")
        followers = tuple(a["id"] for a in self.agents if a["role"] == "follower")
        kw = {}
        if self.initial_transform:
            kw = {"Q_s": np.array(self.initial_transform["Q"]), "d_init": np.array(self.initial_transform["d"])}
        return ReferenceConfiguration(self.n, pos, leaders, followers, aux, **kw)

    def graph(self) -> comms.CommGraph:
        return comms.CommGraph(dict(self.comm_graph))

    def weight_model(self, cfg: ReferenceConfiguration | None = None) -> comms.WeightModel:
        return comms.compute_weights(cfg or self.config(), self.graph())

    def vcs_array(self) -> NDArray[np.float64]:
        return np.array(self.vcs, dtype=float)

    def safety_params(self, cfg: ReferenceConfiguration | None = None) -> safety.SafetyParameters:
        cfg = cfg or self.config()
        s = self.safety
        base = safety.reference_metrics(cfg, self.vcs_array(), s["epsilon"])
        if "delta" in s:
            return base.with_delta(s["delta"])
        if "lambda_min" in s:
            return base.with_delta(safety.delta_from_lambda_min(s["lambda_min"], base.d_s, base.epsilon))
        if "lambda_cd_min" in s:
            return base.with_delta(safety.delta_from_lambda_cd(s["lambda_cd_min"], base.delta_max, base.epsilon))
        return base

    def gain_set(self) -> dynamics.GainSet:
        g = dict(self.gains)
        if "gamma" in g:
            g["gamma"] = tuple(g["gamma"])
        return dynamics.GainSet(**g)

    def bounds(self) -> dynamics.InputBounds:
        return dynamics.InputBounds(**self.input_bounds)

    def obstacle_map(self) -> planner.ObstacleMap | None:
        if not self.obstacles:
            return None
        o = self.obstacles
        boxes = np.array([[b["min"], b["max"]] for b in o.get("boxes", [])], dtype=float).reshape(-1, 2, self.n)
        return planner.ObstacleMap(boxes, np.array(o["workspace"], dtype=float), float(o["resolution"]))

    def deformation_angles(self, params: safety.SafetyParameters | None = None) -> tuple[float, float, float]:
        ang = self.plan.get("deformation_angles", [0.0, 0.0, 0.0])
        if ang == "reference":
            params = params or self.safety_params()
            return params.deformation_angles
        return tuple(float(a) for a in ang)

    # ------------------------------------------------------------------ serialization

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "metadata": {"name": self.name, "n": self.n, "seed": self.seed},
            "agents": [
                {"id": a["id"], "role": a["role"], "position": list(a["position"])} for a in self.agents
            ],
            "comm_graph": {str(k): list(v) for k, v in self.comm_graph.items()},
            "vcs": [list(v) for v in self.vcs],
            "safety": dict(self.safety),
            "gains": dict(self.gains),
            "input_bounds": dict(self.input_bounds),
            "plan": json.loads(json.dumps(self.plan)),
            "timing": dict(self.timing),
        }
        if self.initial_transform:
            out["initial_transform"] = json.loads(json.dumps(self.initial_transform))
        if self.obstacles:
            out["obstacles"] = json.loads(json.dumps(self.obstacles))
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n")


# --------------------------------------------------------------------------- parsing


def parse_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario file.

    Raises:
        ParseError: the file is missing or not valid JSON.
        SchemaError: listing every offending field path.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {p}: {exc.strerror}") from exc
    return loads(text)


def loads(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return from_dict(doc)


def from_dict(doc: Any) -> Scenario:
    """Validate a decoded document and build a :class:`Scenario`.

    Raises:
        SchemaError: structural or cross-reference problems, each with a path.
    """
    col = _Collector()
    if not isinstance(doc, dict):
        raise SchemaError(("$", "top level must be an object"))
    _degree_keys(doc, "$", col)
    for key in doc:
        if key not in SECTIONS:
            col.add(f"$.{key}", "unknown section")
    for key in REQUIRED:
        if key not in doc:
            col.add(f"$.{key}", "missing section")
    if col.errors:
        raise SchemaError(col.errors)

    meta = doc["metadata"]
    n = meta.get("n") if isinstance(meta, dict) else None
    if n not in (1, 2, 3):
        raise SchemaError(("$.metadata.n", "must be 1, 2 or 3"))
    name = str(meta.get("name", "scenario"))
    seed = meta.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        col.add("$.metadata.seed", "must be an integer")
        seed = 0

    agents = _agents(doc["agents"], n, col)
    ids = {a["id"] for a in agents}
    graph = _graph(doc["comm_graph"], ids, col)
    vcs = col.matrix(doc["vcs"], n + 1, 3, "$.vcs")
    safety_sec = _safety(doc["safety"], col)
    init = None
    if "initial_transform" in doc:
        it = doc["initial_transform"]
        if not isinstance(it, dict):
            col.add("$.initial_transform", "must be an object")
        else:
            q = col.matrix(it.get("Q"), 3, 3, "$.initial_transform.Q")
            d = col.vector(it.get("d"), 3, "$.initial_transform.d")
            init = {"Q": q, "d": d}
    obstacles = _obstacles(doc["obstacles"], n, col) if "obstacles" in doc else None
    gains = _gains(doc.get("gains", {}), col)
    bounds = _bounds(doc.get("input_bounds", {}), col)
    plan = _plan(doc["plan"], n, col, obstacles is not None)
    timing = _timing(doc.get("timing", {}), col)
    if col.errors:
        raise SchemaError(col.errors)

    sc = Scenario(name, n, seed, agents, graph, vcs, safety_sec, plan, init, obstacles, gains, bounds, timing)
    _semantic_checks(sc, col)
    if col.errors:
        raise SchemaError(col.errors)
    return sc


def _agents(raw: Any, n: int, col: _Collector) -> list[dict[str, Any]]:
    if not isinstance(raw, list) or not raw:
        col.add("$.agents", "must be a non-empty list")
        return []
    out, seen = [], set()
    for k, a in enumerate(raw):
        path = f"$.agents[{k}]"
        if not isinstance(a, dict):
            col.add(path, "must be an object")
            continue
        aid = a.get("id")
        if not isinstance(aid, int) or isinstance(aid, bool):
            col.add(f"{path}.id", "must be an integer")
            continue
        if aid in seen:
            col.add(f"{path}.id", f"duplicate agent id {aid}")
        seen.add(aid)
        role = a.get("role")
        if role not in ROLES:
            col.add(f"{path}.role", f"must be one of {ROLES}")
            continue
        pos = col.vector(a.get("position"), 3, f"{path}.position")
        if pos is None:
            continue
        if n == 2 and abs(pos[2]) > 1e-9:
            col.add(f"{path}.position", f"agent {aid}: planar teams need z = 0")
        if n == 1 and (abs(pos[1]) > 1e-9 or abs(pos[2]) > 1e-9):
            col.add(f"{path}.position", f"agent {aid}: line teams need y = z = 0")
        out.append({"id": aid, "role": role, "position": pos})
    leaders = [a for a in out if a["role"] == "leader"]
    if len(leaders) != n + 1:
        col.add("$.agents", f"need exactly {n + 1} leaders, got {len(leaders)}")
    return out


def _graph(raw: Any, ids: set[int], col: _Collector) -> dict[int, tuple[int, ...]]:
    if not isinstance(raw, dict):
        col.add("$.comm_graph", "must be an object keyed by agent id")
        return {}
    out = {}
    for key, nbrs in raw.items():
        path = f"$.comm_graph.{key}"
        try:
            aid = int(key)
        except ValueError:
            col.add(path, "key must be an agent id")
            continue
        if aid not in ids:
            col.add(path, f"unknown agent {aid}")
        if not isinstance(nbrs, list) or not all(isinstance(j, int) and not isinstance(j, bool) for j in nbrs):
            col.add(path, "must be a list of agent ids")
            continue
        missing = [j for j in nbrs if j not in ids]
        if missing:
            col.add(path, f"agent {aid} references unknown ids {missing}")
        out[aid] = tuple(nbrs)
    return out


def _safety(raw: Any, col: _Collector) -> dict[str, float]:
    if not isinstance(raw, dict):
        col.add("$.safety", "must be an object")
        return {}
    out = {"epsilon": col.number(raw, "epsilon", "$.safety", positive=True)}
    given = [k for k in ("delta", "lambda_min", "lambda_cd_min") if k in raw]
    if len(given) > 1:
        col.add("$.safety", f"give at most one of delta, lambda_min, lambda_cd_min (got {given})")
    for k in given:
        out[k] = col.number(raw, k, "$.safety", positive=True)
    for k in raw:
        if k not in ("epsilon", "delta", "lambda_min", "lambda_cd_min"):
            col.add(f"$.safety.{k}", "unknown field")
    return out


def _obstacles(raw: Any, n: int, col: _Collector) -> dict[str, Any] | None:
    if not isinstance(raw, dict):
        col.add("$.obstacles", "must be an object")
        return None
    ws = col.matrix(raw.get("workspace"), 2, n, "$.obstacles.workspace")
    res = col.number(raw, "resolution", "$.obstacles", positive=True)
    boxes = []
    for k, b in enumerate(raw.get("boxes", [])):
        path = f"$.obstacles.boxes[{k}]"
        if not isinstance(b, dict):
            col.add(path, "must be an object with min and max")
            continue
        lo = col.vector(b.get("min"), n, f"{path}.min")
        hi = col.vector(b.get("max"), n, f"{path}.max")
        if lo and hi:
            if any(h < l for l, h in zip(lo, hi)):
                col.add(path, "max corner below min corner")
            if ws and (any(l < w - 1e-9 for l, w in zip(lo, ws[0])) or any(h > w + 1e-9 for h, w in zip(hi, ws[1]))):
                col.add(path, "box leaves the workspace")
            boxes.append({"min": lo, "max": hi})
    return {"workspace": ws, "resolution": res, "boxes": boxes}


def _gains(raw: Any, col: _Collector) -> dict[str, Any]:
    if not isinstance(raw, dict):
        col.add("$.gains", "must be an object")
        return {}
    out: dict[str, Any] = {}
    for k in raw:
        if k not in ("gamma", "Xi", "k_psi", "k_psi_dot"):
            col.add(f"$.gains.{k}", "unknown field")
    if "gamma" in raw:
        g = col.vector(raw["gamma"], 4, "$.gains.gamma")
        if g is not None:
            out["gamma"] = g
    if "Xi" in raw:
        xi = raw["Xi"]
        if not isinstance(xi, int) or isinstance(xi, bool) or not 0 <= xi <= 4:
            col.add("$.gains.Xi", "must be an integer in 0..4")
        else:
            out["Xi"] = xi
    for k in ("k_psi", "k_psi_dot"):
        if k in raw:
            v = col.number(raw, k, "$.gains", positive=True)
            if v is not None:
                out[k] = v
    return out


def _bounds(raw: Any, col: _Collector) -> dict[str, float]:
    if not isinstance(raw, dict):
        col.add("$.input_bounds", "must be an object")
        return {}
    out = {}
    for k in raw:
        if k not in ("u_T", "u_phi", "u_theta", "F_min", "F_max", "tilt_max"):
            col.add(f"$.input_bounds.{k}", "unknown field")
            continue
        v = col.number(raw, k, "$.input_bounds", positive=True)
        if v is not None:
            out[k] = v
    return out


def _timing(raw: Any, col: _Collector) -> dict[str, float]:
    if not isinstance(raw, dict):
        col.add("$.timing", "must be an object")
        return dict(DEFAULT_TIMING)
    out = dict(DEFAULT_TIMING)
    for k in raw:
        if k not in DEFAULT_TIMING:
            col.add(f"$.timing.{k}", "unknown field")
    for k in ("dt", "segment_cap"):
        if k in raw:
            out[k] = col.number(raw, k, "$.timing", positive=True, default=DEFAULT_TIMING[k])
    if "t0" in raw:
        out["t0"] = col.number(raw, "t0", "$.timing", default=0.0)
    if "record_every" in raw:
        r = raw["record_every"]
        if not isinstance(r, int) or isinstance(r, bool) or r < 1:
            col.add("$.timing.record_every", "must be a positive integer")
        else:
            out["record_every"] = r
    return out


def _plan(raw: Any, n: int, col: _Collector, has_map: bool) -> dict[str, Any]:
    if not isinstance(raw, dict):
        col.add("$.plan", "must be an object")
        return {}
    mode = raw.get("mode")
    if mode == "OF":
        allowed = {"mode", "waypoints", "durations", "deformation_angles"}
        g = planner.OF_SIZES[n]
        wps = raw.get("waypoints")
        if not isinstance(wps, list) or len(wps) < 2:
            col.add("$.plan.waypoints", "need at least two waypoints")
            wps = []
        wps = [col.vector(w, g, f"$.plan.waypoints[{k}]") for k, w in enumerate(wps)]
        dur = raw.get("durations")
        if dur != "auto":
            dur = col.vector(dur, None, "$.plan.durations")
            if dur is not None and len(dur) != max(len(wps) - 1, 0):
                col.add("$.plan.durations", "need one duration per segment")
            if dur is not None and any(d <= 0 for d in dur):
                col.add("$.plan.durations", "durations must be positive")
        ang = raw.get("deformation_angles", [0.0, 0.0, 0.0])
        if ang != "reference":
            ang = col.vector(ang, 3, "$.plan.deformation_angles")
        out = {"mode": "OF", "waypoints": wps, "durations": dur, "deformation_angles": ang}
    elif mode == "OL":
        allowed = {"mode", "start", "goal", "segment_time", "stretch_bound", "lambda_ceiling"}
        if not has_map:
            col.add("$.obstacles", "OL plans need an obstacle map")
        start = col.matrix(raw.get("start"), n + 1, 3, "$.plan.start")
        goal = col.matrix(raw.get("goal"), n + 1, 3, "$.plan.goal")
        seg = raw.get("segment_time", "auto")
        if seg != "auto":
            seg = col.number(raw, "segment_time", "$.plan", positive=True)
        bound = raw.get("stretch_bound", "conservative")
        if bound not in ("conservative", "relaxed"):
            col.add("$.plan.stretch_bound", "must be conservative or relaxed")
        out = {"mode": "OL", "start": start, "goal": goal, "segment_time": seg, "stretch_bound": bound}
        if "lambda_ceiling" in raw:
            out["lambda_ceiling"] = col.number(raw, "lambda_ceiling", "$.plan", positive=True)
    else:
        col.add("$.plan.mode", "must be OF or OL")
        return {}
    for k in raw:
        if k not in allowed:
            col.add(f"$.plan.{k}", "unknown field")
    return out


def _semantic_checks(sc: Scenario, col: _Collector) -> None:
    """Cross-reference checks that need the assembled configuration."""
    roles = {a["id"]: a["role"] for a in sc.agents}
    for aid, role in roles.items():
        if role in ("follower", "aux") and aid not in sc.comm_graph:
            col.add(f"$.comm_graph.{aid}", f"{role} {aid} has no in-neighbor list")
    for aid, nbrs in sc.comm_graph.items():
        role = roles.get(aid)
        if role == "leader" and nbrs:
            col.add(f"$.comm_graph.{aid}", f"leader {aid} must not have in-neighbors")
        elif role == "follower":
            single_aux = len(nbrs) == 1 and roles.get(nbrs[0]) == "aux"
            if not single_aux and len(nbrs) != sc.n + 1:
                col.add(f"$.comm_graph.{aid}", f"follower {aid} has {len(nbrs)} in-neighbors, needs {sc.n + 1}")
    if col.errors:
        return
    try:
        cfg = sc.config()
        comms.check_graph_structure(cfg, sc.graph())
    except InvalidConfiguration as exc:
        col.add("$.agents", str(exc))
    except ContDefError as exc:
        col.add("$", str(exc))


__all__ = ["Scenario", "from_dict", "loads", "parse_scenario"]
