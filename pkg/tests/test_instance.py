"""Construction exactness: counts, child geometry, level bookkeeping, serialization."""

import json

import numpy as np
import pytest

from laakso_lab import (CapacityError, Params, build_instance, child_points,
                        closed_form_counts, instance_from_dict,
                        instance_to_dict, lp_dist)
from laakso_lab.instance import CHILD_ROLES, Point, ROOT_ROLE


def _counts_by_recurrence(k):
    # independent oracle: P_i = P_{i-1} + 4 * 6^{i-1}, E_i = 6 * E_{i-1}
    points, edges = 2, [1]
    for i in range(1, k + 1):
        points += 4 * edges[-1]
        edges.append(6 * edges[-1])
    return points, edges


@pytest.mark.parametrize("k,n", [(0, 2), (1, 6), (2, 30), (3, 174)])
def test_closed_form_counts(k, n):
    got_n, got_edges = closed_form_counts(k)
    assert got_n == n
    oracle_n, oracle_edges = _counts_by_recurrence(k)
    assert got_n == oracle_n
    assert got_edges == oracle_edges


@pytest.mark.parametrize("k", range(5))
def test_built_counts_match_recurrence(k):
    inst = build_instance(Params(p=4, eps=1 / 16, k=k))
    oracle_n, oracle_edges = _counts_by_recurrence(k)
    assert inst.n == oracle_n
    assert [len(lv) for lv in inst.edges_by_level] == oracle_edges
    assert [len(lv) for lv in inst.diagonals_by_level] == [0] + oracle_edges[:-1]


def test_k0_instance():
    inst = build_instance(Params(p=4, eps=1 / 16, k=0))
    assert inst.n == 2
    assert len(inst.edges) == 1
    assert len(inst.diagonals) == 0
    assert inst.root_edge.role == ROOT_ROLE
    assert inst.root_edge.parent is None
    assert lp_dist(inst.coords[0], inst.coords[1], 4) == pytest.approx(2.0, abs=0)


def test_k1_instance():
    inst = build_instance(Params(p=4, eps=1 / 16, k=1))
    assert inst.n == 6
    assert len(inst.edges_by_level[1]) == 6
    assert len(inst.diagonals) == 1
    roles = [inst.edges[e].role for e in inst.edges_by_level[1]]
    assert roles == list(CHILD_ROLES)


def test_child_points_root_example():
    # a = e_0, b = -e_0, level 1, eps = 1/16, p = 4
    params = Params(p=4, eps=1 / 16, k=1)
    a = Point(0, np.array([1.0, 0.0]), 0)
    b = Point(1, np.array([-1.0, 0.0]), 0)
    s, t, u, v = child_points(a, b, 1, params, first_id=2)
    assert np.array_equal(s.coords, [0.5, 0.0])
    assert np.array_equal(t.coords, [-0.5, 0.0])
    assert np.array_equal(u.coords, [0.0, 0.125])
    assert np.array_equal(v.coords, [0.0, -0.125])
    assert [pt.id for pt in (s, t, u, v)] == [2, 3, 4, 5]
    assert all(pt.birth_level == 1 for pt in (s, t, u, v))


def test_child_points_eps_zero_collapse():
    params = Params(p=3, eps=0.0, k=1)
    a = Point(0, np.array([1.0, 0.0]), 0)
    b = Point(1, np.array([-1.0, 0.0]), 0)
    s, t, u, v = child_points(a, b, 1, params)
    assert np.array_equal(u.coords, v.coords)
    assert np.array_equal(u.coords, 0.5 * (a.coords + b.coords))


def test_child_points_rejects_zero_length():
    params = Params(p=4, eps=1 / 16, k=1)
    a = Point(0, np.array([1.0, 0.0]), 0)
    with pytest.raises(ValueError):
        child_points(a, a, 1, params)


def test_child_points_rejects_bad_level():
    params = Params(p=4, eps=1 / 16, k=1)
    a = Point(0, np.array([1.0, 0.0]), 0)
    b = Point(1, np.array([-1.0, 0.0]), 0)
    with pytest.raises(ValueError):
        child_points(a, b, 2, params)


@pytest.mark.parametrize("p", [3, 4, 8])
@pytest.mark.parametrize("eps", [1 / 64, 1 / 16])
def test_child_edge_and_diagonal_lengths(p, eps):
    inst = build_instance(Params(p=p, eps=eps, k=3))
    stretch = (1.0 + (4.0 * eps) ** p) ** (1.0 / p)
    for e in inst.edges:
        if e.parent is None:
            continue
        r = inst.edge_lengths[e.parent]
        expect = r / 4.0 if e.role in ("a-s", "t-b") else (r / 4.0) * stretch
        assert inst.edge_lengths[e.id] == pytest.approx(expect, rel=1e-12)
    for diag in inst.diagonals:
        r = inst.edge_lengths[diag.parent]
        got = lp_dist(inst.coords[diag.u], inst.coords[diag.v], p)
        assert got == pytest.approx(2.0 * eps * r, rel=1e-12)


def test_level_k_length_range(inst_k3):
    p, eps, k = 4, 1 / 16, 3
    stretch = (1.0 + (4.0 * eps) ** p) ** (1.0 / p)
    lo = 2.0 * 4.0**-k
    hi = 2.0 * (stretch / 4.0) ** k
    leaf = inst_k3.edge_lengths[list(inst_k3.edges_by_level[k])]
    assert (leaf >= lo * (1 - 1e-12)).all()
    assert (leaf <= hi * (1 + 1e-12)).all()


@pytest.mark.parametrize("k", [0, 2, 5])
def test_birth_level_support(k):
    inst = build_instance(Params(p=3, eps=1 / 9, k=k))
    for pt in inst.points:
        assert np.all(pt.coords[pt.birth_level + 1:] == 0.0)


def test_eps_zero_instance_lies_on_axis():
    inst = build_instance(Params(p=4, eps=0.0, k=3))
    assert inst.degenerate
    assert np.all(inst.coords[:, 1:] == 0.0)
    assert np.all(np.abs(inst.coords[:, 0]) <= 1.0)


def test_edge_tree_structure(inst_k2):
    for e in inst_k2.edges:
        if e.parent is None:
            assert e.level == 0
        else:
            assert inst_k2.edges[e.parent].level == e.level - 1
        kids = inst_k2.edge_children[e.id]
        if e.level < inst_k2.params.k:
            assert len(kids) == 6
            assert [inst_k2.edges[c].role for c in kids] == list(CHILD_ROLES)
        else:
            assert kids == ()
    for diag in inst_k2.diagonals:
        # one diagonal per expanded edge, at eps offsets
        s, t, u, v = inst_k2.new_point_ids_of(diag.parent)
        assert (diag.u, diag.v) == (u, v)


def test_determinism_bit_identical():
    a = build_instance(Params(p=4, eps=1 / 16, k=3))
    b = build_instance(Params(p=4, eps=1 / 16, k=3))
    assert a.coords.tobytes() == b.coords.tobytes()
    assert a.edges == b.edges
    assert a.diagonals == b.diagonals


def test_capacity_error():
    with pytest.raises(CapacityError):
        build_instance(Params(p=4, eps=1 / 16, k=9))
    # explicit budgets are honored too
    with pytest.raises(CapacityError):
        build_instance(Params(p=4, eps=1 / 16, k=3), max_points=100)


@pytest.mark.parametrize("bad", [
    dict(p=2, eps=1 / 16, k=1),
    dict(p=1.5, eps=1 / 16, k=1),
    dict(p=4, eps=0.125, k=1),
    dict(p=4, eps=-0.01, k=1),
    dict(p=4, eps=1 / 16, k=-1),
])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        Params(**bad)


def test_json_roundtrip_lossless(inst_k3):
    doc = instance_to_dict(inst_k3, run_config={"command": "test"})
    blob = json.dumps(doc, sort_keys=True)
    back = instance_from_dict(json.loads(blob))
    assert back.coords.tobytes() == inst_k3.coords.tobytes()
    assert back.edges == inst_k3.edges
    assert back.diagonals == inst_k3.diagonals
    assert back.params == inst_k3.params
    assert back.edge_children == inst_k3.edge_children
