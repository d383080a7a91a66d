import numpy as np
import pytest

from drsd.model import instance_from_dict, realize_batch
from drsd.recourse import (DualVertexSet, RecourseError, add_vertex, argmax_dual, eval_recourse_approx,
                           solve_subproblem)
from helpers import bundled, random_instance, random_points, t1_dict


@pytest.fixture
def t1():
    return bundled("t1.json")


def test_t1_subproblem_values(t1):
    v, pi = solve_subproblem(t1, [1.0], [3.0])
    assert v == pytest.approx(2.0)
    np.testing.assert_allclose(pi, [1.0])
    v, pi = solve_subproblem(t1, [5.0], [3.0])
    assert v == pytest.approx(0.0)
    np.testing.assert_allclose(pi, [0.0], atol=1e-12)
    v, _ = solve_subproblem(t1, [1.0], [1.0])
    assert v == pytest.approx(0.0)


def test_dual_value_matches_primal_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(40):
        inst = random_instance(rng)
        pts, _ = inst.true_distribution.support()
        for x in random_points(inst, rng, 5):
            w = pts[rng.integers(len(pts))]
            v, pi = solve_subproblem(inst, x, w)
            R, Ts = realize_batch(inst, w)
            h = R[0] - Ts[0] @ x
            assert float(pi @ h) == pytest.approx(v, rel=1e-7, abs=1e-9)
            assert np.all(inst.W.T @ pi <= inst.g + 1e-8)


def test_infeasible_second_stage_names_point():
    d = t1_dict()
    d["second_stage"] = {"g": [1.0], "W": [[1.0]], "r": [0.0], "T": [[1.0]]}  # y = w - x needs w >= x
    inst = instance_from_dict(d)
    with pytest.raises(RecourseError) as info:
        solve_subproblem(inst, [5.0], [1.0])
    assert "x=[5.0]" in str(info.value) and "omega=[1.0]" in str(info.value)


def test_add_vertex_dedup(t1):
    pis = DualVertexSet.for_instance(t1)
    assert len(add_vertex(pis, [0.0])) == 1
    pis = add_vertex(pis, [1.0])
    assert len(pis) == 2
    pis = add_vertex(pis, [1.0 - 1e-12])
    assert len(pis) == 2
    np.testing.assert_array_equal(pis.vertices, [[0.0], [1.0]])


def test_add_vertex_rejects_infeasible(t1):
    pis = DualVertexSet.for_instance(t1)
    with pytest.raises(ValueError):
        pis.add([2.0])  # W'pi = (2, -2) violates y-column cost 1


def test_argmax_examples(t1):
    pis = add_vertex(DualVertexSet.for_instance(t1), [1.0])
    pi, v = argmax_dual(pis, [1.0], [3.0], t1)
    assert v == pytest.approx(2.0) and pi[0] == 1.0
    pi, v = argmax_dual(DualVertexSet.for_instance(t1), [4.0], [1.0], t1)
    assert v == 0.0 and pi[0] == 0.0
    pi, v = argmax_dual(pis, [5.0], [3.0], t1)
    assert v == 0.0 and pi[0] == 0.0


def test_argmax_ties_take_first(t1):
    pis = add_vertex(DualVertexSet.for_instance(t1), [1.0])
    pi, v = argmax_dual(pis, [3.0], [3.0], t1)  # both vertices score 0
    assert pi[0] == 0.0 and v == 0.0


def test_eval_examples(t1):
    obs = np.array([[1.0], [3.0]])
    ev = eval_recourse_approx(DualVertexSet.for_instance(t1), [2.0], obs, t1)
    np.testing.assert_array_equal(ev.values, [0.0, 0.0])
    pis = add_vertex(DualVertexSet.for_instance(t1), [1.0])
    ev = eval_recourse_approx(pis, [0.0], obs, t1)
    np.testing.assert_allclose(ev.values, [1.0, 3.0])
    np.testing.assert_array_equal(ev.indices, [1, 1])


def test_eval_performs_no_lp_solves(t1, monkeypatch):
    import drsd.recourse as rec

    def boom(*a, **k):
        raise AssertionError("LP solved")

    monkeypatch.setattr(rec, "solve_lp", boom)
    pis = add_vertex(DualVertexSet.for_instance(t1), [1.0])
    eval_recourse_approx(pis, [0.5], np.array([[1.0], [3.0]]), t1)


def test_sandwich_and_exactness_on_random_instances():
    """0 <= Q^k <= Q^{k+1} <= Q, and Q^k is exact where its newest vertex came from."""
    rng = np.random.default_rng(11)
    violations = 0
    for _ in range(12):
        inst = random_instance(rng)
        pts, _ = inst.true_distribution.support()
        pis = DualVertexSet.for_instance(inst)
        for k in range(12):
            x_k = random_points(inst, rng, 1)[0]
            w_k = pts[rng.integers(len(pts))]
            q, pi = solve_subproblem(inst, x_k, w_k)
            before = pis.copy()
            pis.add(pi)
            _, v = argmax_dual(pis, x_k, w_k, inst)
            assert v == pytest.approx(q, rel=1e-7, abs=1e-9)
            X = random_points(inst, rng, 100)
            W = pts[rng.integers(len(pts), size=100)]
            for x, w in zip(X, W):
                lo = eval_recourse_approx(before, x, w[None], inst).values[0]
                hi = eval_recourse_approx(pis, x, w[None], inst).values[0]
                exact, _ = solve_subproblem(inst, x, w)
                if not (-1e-10 <= lo <= hi + 1e-12 and hi <= exact + 1e-8):
                    violations += 1
    assert violations == 0


def test_gap_on_grid_non_increasing():
    # finite stand-in for uniform convergence: the worst gap over a fixed grid never grows
    inst = bundled("t2_capacity.json")
    rng = np.random.default_rng(12)
    pts, _ = inst.true_distribution.support()
    grid = random_points(inst, rng, 40)
    R, Ts = realize_batch(inst, pts)
    exact = np.array([[solve_subproblem(inst, x, w)[0] for w in pts] for x in grid])
    pis = DualVertexSet.for_instance(inst)
    prev = np.inf
    for k in range(25):
        x = random_points(inst, rng, 1)[0]
        w = pts[rng.integers(len(pts))]
        pis.add(solve_subproblem(inst, x, w)[1])
        approx = np.array([eval_recourse_approx(pis, g, None, R=R, Ts=Ts).values for g in grid])
        gap = float((exact - approx).max())
        assert gap <= prev + 1e-12
        prev = gap
