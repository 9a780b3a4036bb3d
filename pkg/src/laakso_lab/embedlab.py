"""Candidate embeddings into R^d under the l_p target norm.

Two producers: a Gaussian random-projection baseline and a gradient descent
stress minimizer for a soft-max surrogate of log-distortion. Distortion is a
max-ratio objective, so the surrogate smooths the max over all pairs of
|log(image distance / source distance)|; log space symmetrizes expansion
against contraction.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .certifier import certified_lower_bound
from .errors import LaaksoLabError, OptimizerError, PreconditionError
from .instance import Instance, Params, build_instance
from .metric import Embedding, distortion, normalize_nonexpansive, representative_ids

_DIST_FLOOR = 1e-300  # keeps logs finite at a collapsed pair; gradients there are zero


@dataclass(frozen=True)
class OptimizerConfig:
    seed: int = 0
    restarts: int = 5
    iterations: int = 300
    step_size: float = 0.1
    decay: str = "sqrt"  # "sqrt" -> step_size/sqrt(t); "none" -> constant
    temperature: float = 0.05
    init: str = "gaussian"  # or "projection-warm-start"

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.decay not in ("sqrt", "none"):
            raise ValueError(f"unknown decay rule {self.decay!r}")
        if self.init not in ("gaussian", "projection-warm-start"):
            raise ValueError(f"unknown init mode {self.init!r}")

    def config_hash(self) -> str:
        blob = json.dumps(self.__dict__, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def identity_embedding(inst: Instance) -> Embedding:
    """Source coordinates as their own images (d = k+1, q = p); distortion 1."""
    images = {i: inst.coords[i].copy() for i in range(inst.n)}
    return Embedding(d=inst.dim, q=inst.params.p, images=images,
                     meta={"method": "identity", "seed": None, "config": None})


def gaussian_projection(inst: Instance, d: int, seed: int, q: float | None = None,
                        matrix: np.ndarray | None = None) -> Embedding:
    """Multiply source coordinates by a (k+1) x d standard normal matrix
    scaled by d^(-1/2); deterministic given the seed.

    `matrix` is a test hook: when given it is applied verbatim (no scaling),
    so the identity matrix reproduces the source coordinates.
    """
    if d < 1:
        raise PreconditionError(f"d must be >= 1, got {d}")
    if matrix is None:
        rng = np.random.default_rng(seed)
        proj = rng.standard_normal((inst.dim, d)) / math.sqrt(d)
    else:
        proj = np.asarray(matrix, dtype=float)
        if proj.shape != (inst.dim, d):
            raise PreconditionError(
                f"projection matrix must be {(inst.dim, d)}, got {proj.shape}")
    y = inst.coords @ proj
    images = {i: y[i] for i in range(inst.n)}
    return Embedding(d=d, q=inst.params.p if q is None else float(q), images=images,
                     meta={"method": "projection", "seed": int(seed), "config": None})


def _pair_indices(m: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(m, k=1)


def _pair_dists(x: np.ndarray, iu: np.ndarray, ju: np.ndarray, p: float) -> np.ndarray:
    diff = np.abs(x[iu] - x[ju])
    return (diff**p).sum(axis=1) ** (1.0 / p)


def _surrogate_full(x: np.ndarray, log_src: np.ndarray, iu: np.ndarray,
                    ju: np.ndarray, q: float, temperature: float):
    x = np.asarray(x, dtype=float)
    m = x.shape[0]
    v = x[iu] - x[ju]
    av = np.abs(v)
    dist = (av**q).sum(axis=1) ** (1.0 / q)
    dist = np.maximum(dist, _DIST_FLOOR)
    logratio = np.log(dist) - log_src
    g = np.abs(logratio)
    top = g.max()
    w = np.exp((g - top) / temperature)
    z = w.sum()
    value = top + temperature * math.log(z)
    w /= z
    coef = w * np.sign(logratio) / dist
    pair_grad = coef[:, None] * (av / dist[:, None]) ** (q - 1.0) * np.sign(v)
    grad = np.zeros_like(x)
    for dim in range(x.shape[1]):
        grad[:, dim] = (np.bincount(iu, weights=pair_grad[:, dim], minlength=m)
                        - np.bincount(ju, weights=pair_grad[:, dim], minlength=m))
    return value, grad, logratio


def stress_surrogate(x: np.ndarray, src_dists: np.ndarray, iu: np.ndarray,
                     ju: np.ndarray, q: float, temperature: float):
    """Soft-max over pairs of |log(image dist / source dist)| and its gradient.

    The value is temperature * logsumexp(g / temperature), which lies within
    temperature * log(#pairs) above the true maximum and converges to it as
    the temperature drops to zero.
    """
    value, grad, _ = _surrogate_full(x, np.log(src_dists), iu, ju, q, temperature)
    return value, grad


def stress_minimize(inst: Instance, d: int, cfg: OptimizerConfig,
                    warm_start: Embedding | None = None) -> Embedding:
    """Gradient descent on the soft-max surrogate with restarts.

    Tracks the best true distortion across every iterate of every restart
    (including the initial ones), so the result never worsens a warm start.
    Returns the best iterate normalized non-expansive.
    """
    if d < 1:
        raise PreconditionError(f"d must be >= 1, got {d}")
    p = inst.params.p
    reps = representative_ids(inst)
    xsrc = inst.coords[reps]
    m = len(xsrc)
    iu, ju = _pair_indices(m)
    src = _pair_dists(xsrc, iu, ju, p)
    if (src == 0).any():
        raise PreconditionError("duplicate source points survived merging")
    log_src = np.log(src)

    best_x: Optional[np.ndarray] = None
    best_log_dist = math.inf

    for restart in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, restart])
        if restart == 0 and warm_start is not None:
            if warm_start.d != d:
                raise PreconditionError(
                    f"warm start has d={warm_start.d}, requested d={d}")
            x = warm_start.image_matrix(reps).copy()
        elif cfg.init == "projection-warm-start":
            proj = rng.standard_normal((inst.dim, d)) / math.sqrt(d)
            x = xsrc @ proj
        else:
            x = rng.standard_normal((m, d))
        if not (restart == 0 and warm_start is not None):
            # match the geometric mean of the pair ratios to 1
            d0 = np.maximum(_pair_dists(x, iu, ju, p), _DIST_FLOOR)
            x *= math.exp(float(log_src.mean() - np.log(d0).mean()))

        for t in range(1, cfg.iterations + 1):
            value, grad, logratio = _surrogate_full(x, log_src, iu, ju, p,
                                                    cfg.temperature)
            if not np.isfinite(grad).all() or not math.isfinite(value):
                raise OptimizerError(
                    f"non-finite gradient at restart {restart}, iteration {t}, "
                    f"surrogate value {value}")
            log_dist = float(logratio.max() - logratio.min())
            if log_dist < best_log_dist:
                best_log_dist = log_dist
                best_x = x.copy()
            gnorm = float(np.sqrt((grad * grad).sum()))
            if gnorm == 0.0:
                break
            step = cfg.step_size / math.sqrt(t) if cfg.decay == "sqrt" else cfg.step_size
            x = x - (step / gnorm) * grad

        dist_now = _pair_dists(x, iu, ju, p)
        lr = np.log(np.maximum(dist_now, _DIST_FLOOR)) - log_src
        log_dist = float(lr.max() - lr.min())
        if log_dist < best_log_dist:
            best_log_dist = log_dist
            best_x = x.copy()

    assert best_x is not None
    rep_row = {pid: idx for idx, pid in enumerate(reps)}
    if inst.degenerate:
        # duplicates share their representative's image
        by_key = {inst.coords[pid].tobytes(): rep_row[pid] for pid in reps}
        images = {i: best_x[by_key[inst.coords[i].tobytes()]].copy() for i in range(inst.n)}
    else:
        images = {i: best_x[rep_row[i]].copy() for i in range(inst.n)}
    emb = Embedding(d=d, q=p, images=images,
                    meta={"method": "stress", "seed": int(cfg.seed),
                          "config": cfg.config_hash()})
    return normalize_nonexpansive(inst, emb)


SWEEP_COLUMNS = ("k", "n", "p", "eps", "d", "method", "seed",
                 "distortion", "cert_lb", "wall_ms")


@dataclass(frozen=True)
class SweepRow:
    k: int
    n: int
    p: float
    eps: float
    d: int
    method: str
    seed: int
    distortion: float
    cert_lb: float
    wall_ms: float

    def cells(self, include_timings: bool) -> list:
        wall = self.wall_ms if include_timings else 0.0
        return [self.k, self.n, self.p, self.eps, self.d, self.method, self.seed,
                self.distortion, self.cert_lb, wall]


@dataclass
class SweepResult:
    rows: list[SweepRow]
    errors: list[str]

    def to_csv(self, include_timings: bool = False) -> str:
        lines = [",".join(SWEEP_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(str(c) for c in row.cells(include_timings)))
        return "\n".join(lines) + "\n"

    def to_dict(self, include_timings: bool = False) -> dict:
        return {
            "columns": list(SWEEP_COLUMNS),
            "rows": [row.cells(include_timings) for row in self.rows],
            "errors": list(self.errors),
        }


def sweep_cell(params: Params, d: int, cfg: OptimizerConfig, seeds: Sequence[int],
               methods: Sequence[str]) -> tuple[list[SweepRow], list[str]]:
    """All rows for one (params, d) grid cell; failures become nan rows."""
    inst = build_instance(params)
    cert = certified_lower_bound(inst, d) if params.eps > 0 else 0.0
    rows: list[SweepRow] = []
    errors: list[str] = []
    for method in methods:
        for seed in seeds:
            t0 = time.perf_counter()
            try:
                if method == "projection":
                    emb = gaussian_projection(inst, d, seed)
                elif method == "stress":
                    emb = stress_minimize(inst, d, replace(cfg, seed=seed))
                else:
                    raise PreconditionError(f"unknown method {method!r}")
                dist = distortion(inst, emb).distortion
                if 1.0 - 1e-9 <= dist < 1.0:
                    dist = 1.0  # float rounding can land a hair under the exact floor of 1
            except (LaaksoLabError, FloatingPointError) as exc:
                dist = math.nan
                errors.append(f"k={params.k} d={d} method={method} seed={seed}: {exc}")
            wall_ms = (time.perf_counter() - t0) * 1000.0
            rows.append(SweepRow(params.k, inst.n, params.p, params.eps, d, method,
                                 seed, dist, cert, wall_ms))
    return rows, errors


def tradeoff_sweep(params_list: Sequence[Params], d_list: Sequence[int],
                   cfg: OptimizerConfig, seeds: Sequence[int],
                   methods: Sequence[str] = ("projection", "stress")) -> SweepResult:
    """Grid run over instances and target dimensions; deterministic given seeds."""
    rows: list[SweepRow] = []
    errors: list[str] = []
    for params in params_list:
        for d in d_list:
            cell_rows, cell_errors = sweep_cell(params, d, cfg, seeds, methods)
            rows.extend(cell_rows)
            errors.extend(cell_errors)
    return SweepResult(rows, errors)
