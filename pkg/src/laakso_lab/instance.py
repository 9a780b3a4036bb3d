"""Recursive gadget point sets in l_p space.

A root pair is expanded level by level: every edge {a, b} spawns four new
points (s, t on the segment at the quarter marks, u, v displaced off the
midpoint along a fresh coordinate) and six child edges, with the pair
{u, v} recorded as the level's diagonal. The result is a leveled hierarchy
of points, edges and diagonals in k+1 coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CapacityError, SchemaError
from .metric import lp_dist
from .serialize import FORMAT_VERSION, require_keys

ROOT_ROLE = "root"
CHILD_ROLES = ("a-s", "s-u", "s-v", "u-t", "v-t", "t-b")
EPS_MAX = 0.125
DEFAULT_MAX_POINTS = 100_000


@dataclass(frozen=True)
class Params:
    """Construction parameters.

    p: ambient norm exponent, must exceed 2.
    eps: gadget half-width as a fraction of the parent edge length, in
        [0, 1/8). eps = 0 collapses u onto v and is admitted as a degenerate
        test mode only; certifier operations reject it.
    k: recursion depth; the construction uses k+1 coordinates.
    """

    p: float
    eps: float
    k: int

    def __post_init__(self):
        if not self.p > 2:
            raise ValueError(f"p must exceed 2, got {self.p}")
        if not 0.0 <= self.eps < EPS_MAX:
            raise ValueError(f"eps must lie in [0, 1/8), got {self.eps}")
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"k must be a non-negative integer, got {self.k}")

    def to_dict(self) -> dict:
        return {"p": float(self.p), "eps": float(self.eps), "k": int(self.k)}


@dataclass(frozen=True, eq=False)
class Point:
    id: int
    coords: np.ndarray
    birth_level: int


@dataclass(frozen=True)
class Edge:
    id: int
    a: int
    b: int
    level: int
    parent: Optional[int]
    role: str


@dataclass(frozen=True)
class Diagonal:
    u: int
    v: int
    level: int
    parent: int


@dataclass(frozen=True, eq=False)
class Instance:
    """The fully built point set; immutable and safe for concurrent reads."""

    params: Params
    points: tuple[Point, ...]
    edges: tuple[Edge, ...]
    diagonals: tuple[Diagonal, ...]
    coords: np.ndarray
    edges_by_level: tuple[tuple[int, ...], ...]
    diagonals_by_level: tuple[tuple[int, ...], ...]
    edge_children: tuple[tuple[int, ...], ...]
    edge_lengths: np.ndarray
    degenerate: bool

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.params.k + 1

    @property
    def root_edge(self) -> Edge:
        return self.edges[0]

    def children_of(self, edge_id: int) -> tuple[int, ...]:
        return self.edge_children[edge_id]

    def internal_edge_ids(self) -> list[int]:
        """Edges that have children, i.e. every edge below level k."""
        return [e.id for e in self.edges if self.edge_children[e.id]]

    def new_point_ids_of(self, edge_id: int) -> tuple[int, int, int, int]:
        """The (s, t, u, v) point ids created when this edge was expanded."""
        kids = self.edge_children[edge_id]
        if not kids:
            raise ValueError(f"edge {edge_id} was never expanded")
        s = self.edges[kids[0]].b   # a-s
        u = self.edges[kids[1]].b   # s-u
        v = self.edges[kids[2]].b   # s-v
        t = self.edges[kids[3]].b   # u-t
        return s, t, u, v


def closed_form_counts(k: int) -> tuple[int, list[int]]:
    """Point count 2 + 4(6^k - 1)/5 and the per-level edge counts [6^0..6^k]."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    n = 2 + 4 * (6**k - 1) // 5
    return n, [6**i for i in range(k + 1)]


def _child_coords(ca: np.ndarray, cb: np.ndarray, level: int, params: Params):
    r = lp_dist(ca, cb, params.p)
    if r == 0.0:
        raise ValueError("zero-length edge cannot be expanded")
    s = 0.75 * ca + 0.25 * cb
    t = 0.25 * ca + 0.75 * cb
    mid = 0.5 * (ca + cb)
    u = mid.copy()
    v = mid.copy()
    u[level] += params.eps * r
    v[level] -= params.eps * r
    return s, t, u, v


def child_points(a: Point, b: Point, level: int, params: Params,
                 first_id: int = 0) -> tuple[Point, Point, Point, Point]:
    """The four points (s, t, u, v) a level-(level-1) edge {a, b} spawns.

    s and t sit at the quarter marks of the segment; u and v sit at the
    midpoint displaced by +/- eps*|a-b|_p along the fresh coordinate e_level.
    Ids are assigned consecutively from first_id.
    """
    if not 1 <= level <= params.k:
        raise ValueError(f"level must lie in [1, {params.k}], got {level}")
    for pt in (a, b):
        if np.any(pt.coords[level:] != 0.0):
            raise ValueError(
                f"point {pt.id} has support at coordinate {level} or above")
    s, t, u, v = _child_coords(a.coords, b.coords, level, params)
    return (
        Point(first_id, s, level),
        Point(first_id + 1, t, level),
        Point(first_id + 2, u, level),
        Point(first_id + 3, v, level),
    )


def build_instance(params: Params, max_points: int = DEFAULT_MAX_POINTS) -> Instance:
    """Build the full recursion: A_0 = {e_0, -e_0}, then k expansion rounds.

    Deterministic: identical Params yield bit-identical instances.
    """
    n_total, edge_counts = closed_form_counts(params.k)
    if n_total > max_points:
        raise CapacityError(
            f"k={params.k} needs {n_total} points, over the budget of {max_points}")
    dim = params.k + 1
    coords = np.zeros((n_total, dim))
    coords[0, 0] = 1.0
    coords[1, 0] = -1.0
    birth = [0, 0]
    edges: list[Edge] = [Edge(0, 0, 1, 0, None, ROOT_ROLE)]
    children: list[list[int]] = [[]]
    diagonals: list[Diagonal] = []
    edges_by_level: list[list[int]] = [[0]]
    diagonals_by_level: list[list[int]] = [[]]

    next_pid = 2
    frontier = [0]
    for level in range(1, params.k + 1):
        new_frontier: list[int] = []
        new_diag_ids: list[int] = []
        for eid in frontier:
            e = edges[eid]
            pa = Point(e.a, coords[e.a], birth[e.a])
            pb = Point(e.b, coords[e.b], birth[e.b])
            s, t, u, v = child_points(pa, pb, level, params, first_id=next_pid)
            for pt in (s, t, u, v):
                coords[pt.id] = pt.coords
                birth.append(level)
            next_pid += 4
            endpoint_pairs = (
                (e.a, s.id), (s.id, u.id), (s.id, v.id),
                (u.id, t.id), (v.id, t.id), (t.id, e.b),
            )
            for role, (pa_id, pb_id) in zip(CHILD_ROLES, endpoint_pairs):
                cid = len(edges)
                edges.append(Edge(cid, pa_id, pb_id, level, eid, role))
                children.append([])
                children[eid].append(cid)
                new_frontier.append(cid)
            new_diag_ids.append(len(diagonals))
            diagonals.append(Diagonal(u.id, v.id, level, eid))
        edges_by_level.append(new_frontier)
        diagonals_by_level.append(new_diag_ids)
        frontier = new_frontier

    assert next_pid == n_total
    assert [len(lv) for lv in edges_by_level] == edge_counts

    coords.setflags(write=False)
    points = tuple(Point(i, coords[i], birth[i]) for i in range(n_total))
    lengths = np.array([lp_dist(coords[e.a], coords[e.b], params.p) for e in edges])
    lengths.setflags(write=False)
    return Instance(
        params=params,
        points=points,
        edges=tuple(edges),
        diagonals=tuple(diagonals),
        coords=coords,
        edges_by_level=tuple(tuple(lv) for lv in edges_by_level),
        diagonals_by_level=tuple(tuple(lv) for lv in diagonals_by_level),
        edge_children=tuple(tuple(c) for c in children),
        edge_lengths=lengths,
        degenerate=(params.eps == 0.0),
    )


def instance_to_dict(inst: Instance, run_config: dict | None = None) -> dict:
    doc = {
        "format": FORMAT_VERSION,
        "params": inst.params.to_dict(),
        "points": [
            {"id": p.id, "birth_level": p.birth_level, "coords": [float(c) for c in p.coords]}
            for p in inst.points
        ],
        "edges": [
            {"id": e.id, "a": e.a, "b": e.b, "level": e.level, "parent": e.parent, "role": e.role}
            for e in inst.edges
        ],
        "diagonals": [
            {"u": g.u, "v": g.v, "level": g.level, "parent": g.parent}
            for g in inst.diagonals
        ],
    }
    if run_config is not None:
        doc["run_config"] = run_config
    return doc


def instance_from_dict(doc: dict) -> Instance:
    """Rebuild an Instance from its JSON document; round-trip is lossless."""
    require_keys(doc, ("params", "points", "edges", "diagonals"), "instance")
    pd = doc["params"]
    require_keys(pd, ("p", "eps", "k"), "instance params")
    try:
        params = Params(p=float(pd["p"]), eps=float(pd["eps"]), k=int(pd["k"]))
    except ValueError as exc:
        raise SchemaError(f"invalid instance params: {exc}") from exc

    n = len(doc["points"])
    dim = params.k + 1
    if sorted(int(rec["id"]) for rec in doc["points"]) != list(range(n)):
        raise SchemaError("point ids are not contiguous from 0")
    coords = np.zeros((n, dim))
    birth = [0] * n
    for rec in doc["points"]:
        i = int(rec["id"])
        vec = rec["coords"]
        if len(vec) != dim:
            raise SchemaError(f"point {i} has {len(vec)} coordinates, expected {dim}")
        coords[i] = vec
        birth[i] = int(rec["birth_level"])
    coords.setflags(write=False)
    points = tuple(Point(i, coords[i], birth[i]) for i in range(n))

    edges = []
    for rec in doc["edges"]:
        parent = rec["parent"]
        edges.append(Edge(int(rec["id"]), int(rec["a"]), int(rec["b"]), int(rec["level"]),
                          None if parent is None else int(parent), str(rec["role"])))
    edges.sort(key=lambda e: e.id)
    if [e.id for e in edges] != list(range(len(edges))):
        raise SchemaError("edge ids are not contiguous from 0")

    children: list[list[int]] = [[] for _ in edges]
    edges_by_level: list[list[int]] = [[] for _ in range(params.k + 1)]
    for e in edges:
        if not 0 <= e.level <= params.k:
            raise SchemaError(f"edge {e.id} has level {e.level} outside [0, {params.k}]")
        edges_by_level[e.level].append(e.id)
        if e.parent is not None:
            children[e.parent].append(e.id)

    diagonals = []
    diagonals_by_level: list[list[int]] = [[] for _ in range(params.k + 1)]
    for rec in doc["diagonals"]:
        g = Diagonal(int(rec["u"]), int(rec["v"]), int(rec["level"]), int(rec["parent"]))
        diagonals_by_level[g.level].append(len(diagonals))
        diagonals.append(g)

    lengths = np.array([lp_dist(coords[e.a], coords[e.b], params.p) for e in edges])
    lengths.setflags(write=False)
    return Instance(
        params=params,
        points=points,
        edges=tuple(edges),
        diagonals=tuple(diagonals),
        coords=coords,
        edges_by_level=tuple(tuple(lv) for lv in edges_by_level),
        diagonals_by_level=tuple(tuple(lv) for lv in diagonals_by_level),
        edge_children=tuple(tuple(c) for c in children),
        edge_lengths=lengths,
        degenerate=(params.eps == 0.0),
    )
