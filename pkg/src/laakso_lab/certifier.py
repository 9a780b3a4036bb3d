"""Executable audits of the per-edge potential argument and the closed-form
distortion lower bound it certifies.

The potential of an edge is the squared Euclidean image distance over the
squared l_p source distance. For a normalized non-expansive embedding into d
coordinates it can never exceed d^(1-2/p), yet under the width threshold
eps <= d^(-1/p) * D^(-2/(p-2)) / c with c = 4^(p/(p-2)), some child of every
edge gains at least alpha = (eps/D)^2 over its parent. Chaining both facts
bounds the feasible recursion depth and yields the certified lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import InvariantViolation, PreconditionError
from .instance import Edge, Instance
from .metric import Embedding, distortion

PHI_REL_TOL = 1e-9  # relative tolerance on all potential comparisons
NONEXPANSIVE_TOL = 1e-9


def growth_constant(p: float) -> float:
    """The width-threshold constant 4^(p/(p-2)); defined only for p > 2."""
    if not p > 2:
        raise PreconditionError(f"the potential argument requires p > 2, got {p}")
    return 4.0 ** (p / (p - 2.0))


def potential_cap(d: int, p: float) -> float:
    """Upper bound d^(1-2/p) on any edge potential of a non-expansive embedding."""
    if d < 1:
        raise PreconditionError(f"d must be >= 1, got {d}")
    if not p > 2:
        raise PreconditionError(f"p must exceed 2, got {p}")
    return float(d) ** (1.0 - 2.0 / p)


def _width_threshold(d: int, D: float, p: float) -> float:
    return float(d) ** (-1.0 / p) * float(D) ** (-2.0 / (p - 2.0)) / growth_constant(p)


def epsilon_for(d: int, D: float, p: float) -> float:
    """Largest admissible gadget width for which the growth step covers
    distortion-D embeddings into d dimensions."""
    if d < 1:
        raise PreconditionError(f"d must be >= 1, got {d}")
    if D < 1:
        raise PreconditionError(f"D must be >= 1, got {D}")
    eps = _width_threshold(d, D, p)
    if eps >= 0.125:
        raise PreconditionError(
            f"width {eps} for (d={d}, D={D}, p={p}) is not below 1/8; "
            "the construction requires eps < 1/8")
    return eps


@dataclass(frozen=True)
class CertifierParams:
    """Audit parameters derived from an instance, a target dimension and a
    distortion bound D (taken from the measured distortion of the audited
    embedding, never from a user claim)."""

    D: float
    alpha: float
    c: float
    eps_threshold: float
    lemma_applicable: bool
    d: int
    p: float

    def to_dict(self) -> dict:
        return {
            "D": self.D,
            "alpha": self.alpha,
            "c": self.c,
            "eps_threshold": self.eps_threshold,
            "lemma_applicable": self.lemma_applicable,
            "d": self.d,
            "p": self.p,
        }


def certifier_params(inst: Instance, d: int, D: float) -> CertifierParams:
    p = inst.params.p
    eps = inst.params.eps
    if eps == 0.0:
        raise PreconditionError("certifier rejects degenerate eps = 0 instances")
    if not math.isfinite(D) or D < 1:
        raise PreconditionError(f"distortion bound must be finite and >= 1, got {D}")
    if d < 1:
        raise PreconditionError(f"d must be >= 1, got {d}")
    thr = _width_threshold(d, D, p)
    return CertifierParams(
        D=float(D),
        alpha=(eps / D) ** 2,
        c=growth_constant(p),
        eps_threshold=thr,
        lemma_applicable=eps <= thr,
        d=int(d),
        p=p,
    )


def edge_potential(inst: Instance, emb: Embedding, e: Edge) -> float:
    """Squared Euclidean image distance over squared l_p source distance."""
    src = inst.edge_lengths[e.id]
    if src == 0.0:
        raise PreconditionError(f"edge {e.id} has zero source length")
    diff = np.asarray(emb.images[e.a], dtype=float) - np.asarray(emb.images[e.b], dtype=float)
    img_sq = float(diff @ diff)
    return img_sq / (src * src)


def edge_potentials(inst: Instance, emb: Embedding) -> np.ndarray:
    """Potentials of all edges at once (vectorized)."""
    y = emb.image_matrix(range(inst.n))
    a_ids = np.fromiter((e.a for e in inst.edges), dtype=int)
    b_ids = np.fromiter((e.b for e in inst.edges), dtype=int)
    diff = y[a_ids] - y[b_ids]
    img_sq = (diff * diff).sum(axis=1)
    return img_sq / (inst.edge_lengths**2)


@dataclass(frozen=True)
class CapAudit:
    max_potential: float
    argmax_edge: int
    cap: float
    ok: bool

    def to_dict(self) -> dict:
        return {"max_potential": self.max_potential, "argmax_edge": self.argmax_edge,
                "cap": self.cap, "ok": self.ok}


def cap_audit(inst: Instance, emb: Embedding, tol: float = 1e-9) -> CapAudit:
    """Check every edge potential against d^(1-2/p); expects a normalized
    non-expansive embedding with q = p."""
    phis = edge_potentials(inst, emb)
    cap = potential_cap(emb.d, inst.params.p)
    worst = int(np.argmax(phis))
    return CapAudit(float(phis[worst]), worst, cap, bool(phis[worst] <= cap + tol))


@dataclass(frozen=True)
class Deltas:
    """Per-coordinate offsets of a gadget point from the image midpoint of its
    parent edge, in units of the parent's source length."""

    point_id: int
    values: np.ndarray

    def sq_norm(self) -> float:
        return float(self.values @ self.values)


def compute_deltas(inst: Instance, emb: Embedding, diag) -> tuple[Deltas, Deltas]:
    parent = inst.edges[diag.parent]
    r = inst.edge_lengths[parent.id]
    if r == 0.0:
        raise PreconditionError(f"parent edge {parent.id} has zero length")
    fa = np.asarray(emb.images[parent.a], dtype=float)
    fb = np.asarray(emb.images[parent.b], dtype=float)
    mid = 0.5 * (fa + fb)
    du = (np.asarray(emb.images[diag.u], dtype=float) - mid) / r
    dv = (np.asarray(emb.images[diag.v], dtype=float) - mid) / r
    return Deltas(diag.u, du), Deltas(diag.v, dv)


def reconstruct_image(inst: Instance, emb: Embedding, deltas: Deltas, diag) -> np.ndarray:
    """Invert the offset decomposition; must reproduce the stored image exactly."""
    parent = inst.edges[diag.parent]
    r = inst.edge_lengths[parent.id]
    fa = np.asarray(emb.images[parent.a], dtype=float)
    fb = np.asarray(emb.images[parent.b], dtype=float)
    return 0.5 * (fa + fb) + deltas.values * r


def delta_sum_audit(inst: Instance, emb: Embedding, D: float, tol: float = 1e-9) -> list[dict]:
    """For every diagonal of a normalized distortion-<=D embedding, the larger
    of the two squared offset norms must reach (eps/D)^2."""
    eps = inst.params.eps
    bound = (eps / D) ** 2
    rows = []
    for idx, diag in enumerate(inst.diagonals):
        du, dv = compute_deltas(inst, emb, diag)
        lhs = max(du.sq_norm(), dv.sq_norm())
        rows.append({
            "diagonal": idx,
            "level": diag.level,
            "max_sq_delta": lhs,
            "bound": bound,
            "ok": lhs >= bound - tol,
        })
    return rows


@dataclass(frozen=True)
class LemmaStep:
    parent: int
    child: int
    parent_phi: float
    child_phi: float
    increment: float


@dataclass(frozen=True)
class ViolationReport:
    """No child reached the required potential. Under verified preconditions
    this signals a bug or a breached precondition, never a refutation."""

    edge: int
    level: int
    parent_phi: float
    required: float
    best_child: int
    best_child_phi: float
    child_phis: tuple[float, ...]

    @property
    def deficit(self) -> float:
        return self.required - self.best_child_phi

    def to_dict(self) -> dict:
        return {
            "edge": self.edge,
            "level": self.level,
            "parent_phi": self.parent_phi,
            "required": self.required,
            "best_child": self.best_child,
            "best_child_phi": self.best_child_phi,
            "deficit": self.deficit,
        }


def check_preconditions(inst: Instance, emb: Embedding, cp: CertifierParams):
    """Verify the growth-step preconditions; returns the distortion report."""
    if emb.q != inst.params.p:
        raise PreconditionError(
            f"certifier requires image exponent q = p, got q={emb.q}, p={inst.params.p}")
    if emb.d != cp.d:
        raise PreconditionError(f"embedding dimension {emb.d} != certifier dimension {cp.d}")
    if not cp.lemma_applicable:
        raise PreconditionError(
            f"eps={inst.params.eps} exceeds the width threshold {cp.eps_threshold} "
            f"for (d={cp.d}, D={cp.D}, p={cp.p})")
    report = distortion(inst, emb)
    if report.max_expansion > 1.0 + NONEXPANSIVE_TOL:
        raise PreconditionError(
            f"embedding is not non-expansive (max_expansion={report.max_expansion}); "
            "normalize it first")
    if report.distortion > cp.D * (1.0 + PHI_REL_TOL):
        raise PreconditionError(
            f"measured distortion {report.distortion} exceeds the audited bound {cp.D}")
    return report


def _growth_step(inst: Instance, phis: np.ndarray, e: Edge,
                 cp: CertifierParams) -> Union[LemmaStep, ViolationReport]:
    kids = inst.edge_children[e.id]
    if not kids:
        raise PreconditionError(f"edge {e.id} has no children (level {e.level} is the deepest)")
    parent_phi = float(phis[e.id])
    child_phis = [float(phis[c]) for c in kids]
    best_idx = int(np.argmax(child_phis))
    best_phi = child_phis[best_idx]
    required = parent_phi + cp.alpha
    tol = PHI_REL_TOL * max(1.0, required)
    if best_phi >= required - tol:
        return LemmaStep(e.id, kids[best_idx], parent_phi, best_phi, best_phi - parent_phi)
    return ViolationReport(e.id, e.level, parent_phi, required, kids[best_idx],
                           best_phi, tuple(child_phis))


def lemma_step(inst: Instance, emb: Embedding, e: Edge,
               cp: CertifierParams) -> Union[LemmaStep, ViolationReport]:
    """Return the max-potential child of e if it clears parent_phi + alpha.

    Under the stated preconditions a qualifying child always exists: the
    diagonal forces the gadget points away from the image midpoint, and that
    offset surfaces in at least one of the six children. Evaluating all six
    and taking the maximum is strictly stronger than any particular branch
    choice.
    """
    check_preconditions(inst, emb, cp)
    return _growth_step(inst, edge_potentials(inst, emb), e, cp)


def growth_step_trace(inst: Instance, emb: Embedding, e: Edge) -> dict:
    """Diagnostic quantities for one expansion: child potentials plus the
    normalized midpoint-offset potentials of the gadget points."""
    phis = edge_potentials(inst, emb)
    kids = inst.edge_children[e.id]
    if not kids:
        raise PreconditionError(f"edge {e.id} has no children")
    r = inst.edge_lengths[e.id]
    s, t, u, v = inst.new_point_ids_of(e.id)
    y = {i: np.asarray(emb.images[i], dtype=float) for i in (e.a, e.b, s, t, u, v)}

    def sq(i, j):
        diff = y[i] - y[j]
        return float(diff @ diff)

    return {
        "edge": e.id,
        "level": e.level,
        "parent_phi": float(phis[e.id]),
        "child_phis": {inst.edges[c].role: float(phis[c]) for c in kids},
        "quarter_scaled": {
            "u_a": 4.0 * sq(u, e.a) / r**2,
            "u_b": 4.0 * sq(u, e.b) / r**2,
            "v_a": 4.0 * sq(v, e.a) / r**2,
            "v_b": 4.0 * sq(v, e.b) / r**2,
            "a_s": 16.0 * sq(e.a, s) / r**2,
            "u_s": 16.0 * sq(u, s) / r**2,
            "v_s": 16.0 * sq(v, s) / r**2,
        },
    }


@dataclass(frozen=True)
class PotentialWitness:
    """A root-to-leaf chain of edges whose potentials grow by at least alpha
    per level (when `violated` is False)."""

    chain: tuple[tuple[int, float], ...]
    increments: tuple[float, ...]
    violated: bool
    violated_level: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "chain": [[eid, phi] for eid, phi in self.chain],
            "increments": list(self.increments),
            "violated": self.violated,
            "violated_level": self.violated_level,
        }


def witness_chain(inst: Instance, emb: Embedding, cp: CertifierParams) -> PotentialWitness:
    """Iterate the growth step from the root edge down to level k.

    Follows the max-potential child at every level even past a violation, so
    the returned increments are honest; the first failing level is recorded.
    The final potential is checked against the cap, which no normalized
    non-expansive embedding can exceed.
    """
    check_preconditions(inst, emb, cp)
    phis = edge_potentials(inst, emb)
    e = inst.root_edge
    chain = [(e.id, float(phis[e.id]))]
    increments: list[float] = []
    violated = False
    violated_level = None
    for level in range(1, inst.params.k + 1):
        out = _growth_step(inst, phis, e, cp)
        if isinstance(out, ViolationReport):
            if not violated:
                violated = True
                violated_level = level
            child_id = out.best_child
            child_phi = out.best_child_phi
        else:
            child_id = out.child
            child_phi = out.child_phi
        increments.append(child_phi - chain[-1][1])
        chain.append((child_id, child_phi))
        e = inst.edges[child_id]

    cap = potential_cap(cp.d, cp.p)
    final_phi = chain[-1][1]
    if final_phi > cap + PHI_REL_TOL * max(1.0, cap):
        raise InvariantViolation(
            f"final potential {final_phi} exceeds the cap {cap}; "
            "the audited embedding cannot be non-expansive")
    return PotentialWitness(tuple(chain), tuple(increments), violated, violated_level)


def audit_internal_edges(inst: Instance, emb: Embedding,
                         cp: CertifierParams) -> tuple[list[LemmaStep], list[ViolationReport]]:
    """Run the growth step on every edge that has children."""
    check_preconditions(inst, emb, cp)
    phis = edge_potentials(inst, emb)
    steps: list[LemmaStep] = []
    violations: list[ViolationReport] = []
    for eid in inst.internal_edge_ids():
        out = _growth_step(inst, phis, inst.edges[eid], cp)
        if isinstance(out, ViolationReport):
            violations.append(out)
        else:
            steps.append(out)
    return steps, violations


def lower_bound_formula(k: int, eps: float, p: float, d: int) -> float:
    """Closed-form certified distortion lower bound for depth k and width eps.

    The bound is the smaller of the largest D the width threshold still covers
    and the largest D the level-count inequality k <= d^(1-2/p) (D/eps)^2
    rules out. Values below 1 certify nothing and are reported as 0.
    """
    if eps <= 0.0:
        raise PreconditionError("certified bound requires eps > 0")
    if k < 0:
        raise PreconditionError(f"k must be non-negative, got {k}")
    if d < 1:
        raise PreconditionError(f"d must be >= 1, got {d}")
    c = growth_constant(p)
    d_threshold = (float(d) ** (-1.0 / p) / (c * eps)) ** ((p - 2.0) / 2.0)
    d_levels = eps * math.sqrt(k) * float(d) ** (1.0 / p - 0.5)
    value = min(d_threshold, d_levels)
    return value if value >= 1.0 else 0.0


def certified_lower_bound(inst: Instance, d: int) -> float:
    """Distortion floor for any embedding of this instance into d coordinates
    under the same norm exponent."""
    params = inst.params
    return lower_bound_formula(params.k, params.eps, params.p, d)
