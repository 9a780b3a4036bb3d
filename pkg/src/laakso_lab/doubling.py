"""Empirical doubling-constant estimation and the descendant-envelope check.

The doubling constant of a metric space is the minimal number of radius-r
balls needed to cover any radius-2r ball. Exact covering numbers are hard, so
the estimator reports greedy maximal r-separated subsets of 2r-balls: the
packing size lambda upper-bounds the covering structure up to the standard
factor-of-two radius conventions, and lambda^2 is the packing-based surrogate
for the doubling constant itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .instance import Instance
from .metric import rows_lp_norm, segment_distances

CONVENTION = (
    "lambda_hat = max over centers x and grid radii r of the size of a greedy "
    "maximal r-separated subset of the ball B(x, 2r); lambda_hat^2 is the "
    "packing-based upper-bound surrogate for the doubling constant"
)

_ZERO_ENVELOPE_TOL = 1e-12


@dataclass(frozen=True)
class ScaleProbe:
    radius: float
    worst_point: int
    packing_size: int

    def to_dict(self) -> dict:
        return {"radius": self.radius, "worst_point": self.worst_point,
                "packing_size": self.packing_size}


@dataclass(frozen=True)
class DoublingEstimate:
    lambda_hat: int
    lambda_hat_squared: int
    per_scale: tuple[ScaleProbe, ...]
    radii: tuple[float, ...]
    convention: str = CONVENTION

    def to_dict(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat,
            "lambda_hat_squared": self.lambda_hat_squared,
            "per_scale": [s.to_dict() for s in self.per_scale],
            "radii": list(self.radii),
            "convention": self.convention,
        }


def _greedy_packing_size(coords: np.ndarray, candidates: np.ndarray, r: float,
                         p: float) -> int:
    """Greedy maximal r-separated subset, scanning candidates in id order."""
    count = 0
    while candidates.size:
        head = candidates[0]
        count += 1
        dists = rows_lp_norm(coords[candidates] - coords[head], p)
        candidates = candidates[dists >= r]
    return count


def _distance_extremes(coords: np.ndarray, p: float) -> tuple[float, float]:
    dmin = np.inf
    dmax = 0.0
    n = coords.shape[0]
    for i in range(n - 1):
        row = rows_lp_norm(coords[i + 1:] - coords[i], p)
        positive = row[row > 0]
        if positive.size:
            dmin = min(dmin, float(positive.min()))
        dmax = max(dmax, float(row.max()))
    return dmin, dmax


def auto_radius_grid(coords: np.ndarray, p: float) -> list[float]:
    """Geometric grid, ratio 2, from the smallest positive pairwise distance
    up to the first value at or above the largest."""
    dmin, dmax = _distance_extremes(coords, p)
    if not np.isfinite(dmin) or dmax == 0.0:
        return []
    radii = [dmin]
    while radii[-1] < dmax:
        radii.append(radii[-1] * 2.0)
    return radii


def doubling_estimate_points(coords: np.ndarray, p: float,
                             radius_grid="auto") -> DoublingEstimate:
    """Probe every (point, radius) pair on a raw coordinate array."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[0] < 1:
        raise PreconditionError("need a non-empty 2-d coordinate array")
    radii = auto_radius_grid(coords, p) if isinstance(radius_grid, str) else \
        [float(r) for r in radius_grid]
    if any(r <= 0 for r in radii):
        raise PreconditionError("radii must be positive")

    n = coords.shape[0]
    best = {r: (1, 0) for r in radii}  # radius -> (packing size, worst point)
    for x in range(n):
        row = rows_lp_norm(coords - coords[x], p)
        for r in radii:
            ball = np.nonzero(row <= 2.0 * r)[0]
            size = _greedy_packing_size(coords, ball, r, p)
            if size > best[r][0]:
                best[r] = (size, x)
    per_scale = tuple(ScaleProbe(r, best[r][1], best[r][0]) for r in radii)
    lam = max((s.packing_size for s in per_scale), default=1)
    return DoublingEstimate(lam, lam * lam, per_scale, tuple(radii))


def doubling_estimate(inst: Instance, radius_grid="auto") -> DoublingEstimate:
    return doubling_estimate_points(inst.coords, inst.params.p, radius_grid)


@dataclass(frozen=True)
class EnvelopeRow:
    edge: int
    level: int
    length: float
    max_descendant_distance: float
    bound: float
    passed: bool

    def to_dict(self) -> dict:
        return {"edge": self.edge, "level": self.level, "length": self.length,
                "max_descendant_distance": self.max_descendant_distance,
                "bound": self.bound, "passed": self.passed}


@dataclass(frozen=True)
class EnvelopeReport:
    rows: tuple[EnvelopeRow, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> list[EnvelopeRow]:
        return [r for r in self.rows if not r.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "rows": [r.to_dict() for r in self.rows]}


def descendant_point_ids(inst: Instance) -> dict[int, list[int]]:
    """For every internal edge, all point ids introduced in its subtree."""
    desc: dict[int, list[int]] = {}
    for level in range(inst.params.k - 1, -1, -1):
        for eid in inst.edges_by_level[level]:
            own = list(inst.new_point_ids_of(eid))
            for kid in inst.edge_children[eid]:
                own.extend(desc.get(kid, ()))
            desc[eid] = own
    return desc


def envelope_check(inst: Instance) -> EnvelopeReport:
    """Every internal edge of length r must hold all its descendant points
    within distance 2*eps*r of the segment joining its endpoints.

    eps = 0 is admitted as a degenerate mode: the bound collapses to zero and
    a row passes when its descendants lie on the segment (distance ~ 0).
    """
    eps = inst.params.eps
    p = inst.params.p
    desc = descendant_point_ids(inst)
    rows = []
    for level in range(inst.params.k):
        for eid in inst.edges_by_level[level]:
            e = inst.edges[eid]
            r = float(inst.edge_lengths[eid])
            xs = inst.coords[desc[eid]]
            dists = segment_distances(xs, inst.coords[e.a], inst.coords[e.b], p)
            mx = float(dists.max())
            bound = 2.0 * eps * r
            passed = mx < bound if eps > 0 else mx <= _ZERO_ENVELOPE_TOL
            rows.append(EnvelopeRow(eid, level, r, mx, bound, passed))
    return EnvelopeReport(tuple(rows))
