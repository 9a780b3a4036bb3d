"""l_p geometry primitives: norms, distortion of finite embeddings, segment distances.

All operations are pure functions over immutable inputs. Pairwise scans run
row-blocked so memory stays linear in the point count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping

import numpy as np

from .errors import PreconditionError

if TYPE_CHECKING:
    from .instance import Instance

TERNARY_ITERS = 200  # interval shrinks by (2/3)^200, far below the 1e-10 theta tolerance


def lp_dist(x, y, p: float) -> float:
    """l_p distance between two equal-length vectors, max-factored against overflow."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    diff = np.abs(x - y)
    m = float(diff.max()) if diff.size else 0.0
    if m == 0.0:
        return 0.0
    return m * float(((diff / m) ** p).sum()) ** (1.0 / p)


def rows_lp_norm(v: np.ndarray, p: float) -> np.ndarray:
    """l_p norm of every row of a 2-d array, max-factored per row."""
    a = np.abs(np.asarray(v, dtype=float))
    if a.ndim != 2:
        raise ValueError("expected a 2-d array")
    m = a.max(axis=1)
    out = np.zeros(a.shape[0])
    nz = m > 0
    if nz.any():
        scaled = a[nz] / m[nz, None]
        out[nz] = m[nz] * ((scaled**p).sum(axis=1)) ** (1.0 / p)
    return out


@dataclass(frozen=True)
class Embedding:
    """A finite map point id -> d-vector under a target norm exponent q.

    q equals the source exponent p everywhere except the l_2 evaluation mode
    of the random-projection baseline.
    """

    d: int
    q: float
    images: Mapping[int, np.ndarray]
    meta: dict = field(default_factory=dict)

    def image_matrix(self, ids: Iterable[int]) -> np.ndarray:
        return np.asarray([self.images[i] for i in ids], dtype=float)


@dataclass(frozen=True)
class DistortionReport:
    max_expansion: float
    max_contraction: float
    distortion: float
    argmax_expansion_pair: tuple[int, int]
    argmax_contraction_pair: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "max_expansion": self.max_expansion,
            "max_contraction": self.max_contraction,
            "distortion": self.distortion,
            "argmax_expansion_pair": list(self.argmax_expansion_pair),
            "argmax_contraction_pair": list(self.argmax_contraction_pair),
        }


REPORT_CSV_HEADER = "n,k,p,eps,d,method,seed,expansion,contraction,distortion"


def report_csv_row(report: DistortionReport, inst: "Instance", d: int, method: str, seed) -> str:
    p = inst.params
    cells = [inst.n, p.k, p.p, p.eps, d, method, seed, report.max_expansion,
             report.max_contraction, report.distortion]
    return ",".join(str(c) for c in cells)


def representative_ids(inst: "Instance") -> list[int]:
    """Point ids with exact-duplicate coordinate rows merged.

    Only degenerate (eps = 0) instances contain duplicates; they are kept as
    distinct ids by the builder and merged here before any distance ratio.
    """
    if not inst.degenerate:
        return list(range(inst.n))
    seen: dict[bytes, int] = {}
    reps = []
    for i in range(inst.n):
        key = inst.coords[i].tobytes()
        if key not in seen:
            seen[key] = i
            reps.append(i)
    return reps


def _check_coverage(inst: "Instance", emb: Embedding) -> None:
    for i in range(inst.n):
        img = emb.images.get(i)
        if img is None:
            raise PreconditionError(f"embedding has no image for point id {i}")
        if len(img) != emb.d:
            raise PreconditionError(
                f"image of point {i} has length {len(img)}, embedding dimension is {emb.d}")


def distortion(inst: "Instance", emb: Embedding, source_q: float | None = None) -> DistortionReport:
    """Exact brute force over all unordered pairs of (merged) points.

    A collapsed image pair yields distortion +inf, never an exception, so
    optimizer sweeps can record the outcome and continue.
    """
    _check_coverage(inst, emb)
    p_src = inst.params.p if source_q is None else source_q
    reps = representative_ids(inst)
    x = inst.coords[reps]
    y = emb.image_matrix(reps)

    max_exp = -math.inf
    arg_exp = (reps[0], reps[0])
    max_con = -math.inf
    arg_con = (reps[0], reps[0])
    m = len(reps)
    for i in range(m - 1):
        sv = rows_lp_norm(x[i + 1:] - x[i], p_src)
        tv = rows_lp_norm(y[i + 1:] - y[i], emb.q)
        if (sv == 0).any():
            raise PreconditionError("zero source distance between distinct point ids")
        ratios = tv / sv
        j = int(np.argmax(ratios))
        if ratios[j] > max_exp:
            max_exp = float(ratios[j])
            arg_exp = (reps[i], reps[i + 1 + j])
        with np.errstate(divide="ignore"):
            inv = sv / tv
        j = int(np.argmax(inv))
        if inv[j] > max_con:
            max_con = float(inv[j])
            arg_con = (reps[i], reps[i + 1 + j])
    if math.isinf(max_con) or max_exp == 0.0:
        dist = math.inf
    else:
        dist = max_exp * max_con
    return DistortionReport(max_exp, max_con, dist, arg_exp, arg_con)


def normalize_nonexpansive(inst: "Instance", emb: Embedding, source_q: float | None = None) -> Embedding:
    """Scale all images by 1/max_expansion; distortion is unchanged."""
    report = distortion(inst, emb, source_q=source_q)
    me = report.max_expansion
    if me == 0.0 or not math.isfinite(me):
        raise PreconditionError(f"cannot normalize: max_expansion = {me}")
    if me == 1.0:
        return emb
    scale = 1.0 / me
    images = {i: np.asarray(v, dtype=float) * scale for i, v in emb.images.items()}
    return Embedding(d=emb.d, q=emb.q, images=images, meta=dict(emb.meta))


def point_segment_distance(x, a, b, p: float) -> float:
    """min over theta in [0,1] of the l_p distance from x to a + theta*(b - a).

    The norm is convex along the segment, so ternary search converges.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b):
        raise PreconditionError("segment endpoints coincide")
    direction = b - a
    lo, hi = 0.0, 1.0
    for _ in range(TERNARY_ITERS):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        f1 = lp_dist(x, a + m1 * direction, p)
        f2 = lp_dist(x, a + m2 * direction, p)
        if f1 < f2:
            hi = m2
        else:
            lo = m1
    theta = 0.5 * (lo + hi)
    return lp_dist(x, a + theta * direction, p)


def segment_distances(xs: np.ndarray, a, b, p: float) -> np.ndarray:
    """Vectorized point_segment_distance for a batch of query points."""
    xs = np.asarray(xs, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b):
        raise PreconditionError("segment endpoints coincide")
    direction = b - a
    m = xs.shape[0]
    lo = np.zeros(m)
    hi = np.ones(m)
    for _ in range(TERNARY_ITERS):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        f1 = rows_lp_norm(xs - (a + m1[:, None] * direction), p)
        f2 = rows_lp_norm(xs - (a + m2[:, None] * direction), p)
        take = f1 < f2
        hi = np.where(take, m2, hi)
        lo = np.where(take, lo, m1)
    theta = 0.5 * (lo + hi)
    return rows_lp_norm(xs - (a + theta[:, None] * direction), p)


def embedding_to_dict(emb: Embedding, run_config: dict | None = None) -> dict:
    from .serialize import FORMAT_VERSION

    doc = {
        "format": FORMAT_VERSION,
        "d": emb.d,
        "q": emb.q,
        "meta": dict(emb.meta),
        "images": {str(i): [float(v) for v in vec] for i, vec in emb.images.items()},
    }
    if run_config is not None:
        doc["run_config"] = run_config
    return doc


def embedding_from_dict(doc: dict) -> Embedding:
    from .serialize import require_keys

    require_keys(doc, ("d", "q", "images"), "embedding")
    try:
        images = {int(i): np.asarray(vec, dtype=float) for i, vec in doc["images"].items()}
    except (TypeError, ValueError) as exc:
        from .errors import SchemaError

        raise SchemaError(f"malformed embedding images: {exc}") from exc
    return Embedding(d=int(doc["d"]), q=float(doc["q"]), images=images,
                     meta=dict(doc.get("meta", {})))
