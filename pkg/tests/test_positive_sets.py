import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snmono.positive_sets import (FiniteCloud, GraphSet, LinearSubspace, OperatorGraph,
                                  SequenceGraph, certify_quasidense, default_probe_grid,
                                  density_gap, is_L_positive, maximality_probe, set_from_dict,
                                  stable_radius)
from snmono.mono_ops import SubdiffMap, resolvent_gap_oracle, LinearMap, tail_probe_value
from snmono.convex_fn import Indicator, NormPower, Quadratic
from snmono.sn_core import negated_identity_space, product_space, scaled_identity_space


def test_any_cloud_positive_in_scaled_identity(rng):
    A = FiniteCloud(scaled_identity_space(3, 0.5), rng.standard_normal((30, 3)))
    assert is_L_positive(A).ok


def test_two_points_not_positive_in_negated_identity():
    A = FiniteCloud(negated_identity_space(2, 1.0), [[0.0, 0.0], [1.0, 1.0]])
    rep = is_L_positive(A)
    assert not rep.ok and rep.min_q < 0
    a, c = rep.witness
    assert A.space.q(a - c) < 0


def test_monotone_pair_positive():
    assert is_L_positive(FiniteCloud(product_space(1), [[0.0, 0.0], [1.0, 1.0]])).ok


def test_non_monotone_subspace_detected():
    A = OperatorGraph(product_space(1), [[-1.0]])
    rep = is_L_positive(A)
    assert not rep.ok


def test_gap_identity(identity_graph):
    gap, m = density_gap(identity_graph, [1.0, -1.0])
    assert gap == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(m, 0.0, atol=1e-12)


def test_gap_singleton():
    A = FiniteCloud(product_space(1), [[0.0, 0.0]])
    gap, _ = density_gap(A, [1.0, 0.0])
    assert gap == pytest.approx(0.5)


def test_gap_tail_witness():
    A = SequenceGraph("tail", 100)
    gap, m = density_gap(A, A.e_star())
    assert gap >= 0.25 - 1e-9
    assert gap <= 0.26
    assert A.analytic_lower_bound(A.e_star()) == 0.25


def test_tail_objective_matches_direct_evaluation(rng):
    A = SequenceGraph("tail", 30)
    for _ in range(20):
        x = rng.standard_normal(30) * (rng.uniform(size=30) < 0.3)
        assert A.objective(x, A.e_star()) == pytest.approx(tail_probe_value(x), abs=1e-12)


def test_certify_identity(identity_graph):
    assert certify_quasidense(identity_graph).quasidense


def test_certify_tail_refuted():
    A = SequenceGraph("tail", 50)
    cert = certify_quasidense(A, [A.e_star()])
    assert cert.verdict == "refuted"
    assert cert.lower_bound == pytest.approx(0.25)


def test_certify_abs_subdifferential():
    A = SubdiffMap(NormPower(1)).graph_set()
    cert = certify_quasidense(A, default_probe_grid(A.space, 5, 0.5))
    assert cert.quasidense


def test_certify_cloud_refuted():
    A = FiniteCloud(product_space(1), [[0.0, 0.0]])
    cert = certify_quasidense(A)
    assert cert.verdict == "refuted"


def test_empty_grid_rejected(identity_graph):
    with pytest.raises(ValueError):
        certify_quasidense(identity_graph, np.zeros((0, 2)))


def test_stable_radius_examples(identity_graph):
    assert stable_radius(identity_graph, [0.5, 0.5]) == 0.0
    assert stable_radius(identity_graph, [1.0, -1.0]) == pytest.approx(math.sqrt(2), abs=1e-6)
    A = FiniteCloud(scaled_identity_space(1, 1.0), [[0.0], [3.0]])
    # r_L = |.|^2 here, so the gap vanishes only at a member
    assert stable_radius(A, [3.0]) == 0.0


def test_stable_radius_undefined_off_dense_set():
    A = FiniteCloud(product_space(1), [[0.0, 0.0]])
    with pytest.raises(ValueError):
        stable_radius(A, [1.0, 0.0])


def test_maximality_examples(identity_graph, rng):
    cands = np.array([[1.0, -1.0], [2.0, 0.5], [-1.0, 3.0]])
    assert maximality_probe(identity_graph, cands).verdict == "maximal-on-candidates"
    single = FiniteCloud(product_space(1), [[0.0, 0.0]])
    rep = maximality_probe(single, [[1.0, 1.0]])
    assert rep.verdict == "extension-witness"
    # q_L = -1/2|.|^2 here, so no point extends a singleton: singletons are maximal
    flat = FiniteCloud(negated_identity_space(2, 1.0), [[0.0, 0.0]])
    assert maximality_probe(flat, rng.standard_normal((3, 2))).verdict == "maximal-on-candidates"


def test_set_from_dict_kinds():
    sp = product_space(1)
    assert isinstance(set_from_dict(sp, {"kind": "finite-cloud", "points": [[0, 0]]}), FiniteCloud)
    assert isinstance(set_from_dict(sp, {"kind": "operator-graph", "M": [[2.0]]}), OperatorGraph)
    sub = set_from_dict(sp, {"kind": "linear-subspace", "basis": [[1.0, 1.0]]})
    assert sub.contains([2.0, 2.0]) and not sub.contains([1.0, 0.0])
    with pytest.raises(ValueError):
        set_from_dict(sp, {"kind": "blob"})


@pytest.mark.parametrize("k", [Quadratic(np.eye(1)), NormPower(1), Indicator(1, lo=[0.0], hi=[1.0])])
def test_gap_matches_resolvent_oracle(k):
    S = SubdiffMap(k)
    A = S.graph_set()
    for c in default_probe_grid(A.space, 5, 0.75):
        g, _ = density_gap(A, c)
        o, _ = resolvent_gap_oracle(S, c[:1], c[1:])
        assert g == pytest.approx(o, abs=1e-6)


def test_gap_matches_oracle_for_linear(rng):
    M = np.array([[1.0, 2.0], [-2.0, 0.5]])
    S = LinearMap(M)
    A = S.graph_set()
    for c in rng.standard_normal((20, 4)):
        assert density_gap(A, c)[0] == pytest.approx(resolvent_gap_oracle(S, c[:2], c[2:])[0], abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.integers(0, 2))
def test_gap_nonnegative(c, which):
    A = [OperatorGraph(product_space(1), [[1.0]]),
         FiniteCloud(product_space(1), [[0.0, 0.0], [1.0, 2.0]]),
         SubdiffMap(NormPower(1)).graph_set()][which]
    assert density_gap(A, c)[0] >= -1e-9


def test_closed_quasidense_cloud_has_no_remote_extension(rng):
    # a positive-gap-free candidate for a dense set must sit next to it
    A = FiniteCloud(scaled_identity_space(1, 1.0), [[0.0], [1.0]])
    cert = certify_quasidense(A, [[0.0], [1.0]])
    assert cert.quasidense
    tol = 1e-8
    for b in rng.uniform(-2, 3, (50, 1)):
        if A.inf_q(b) >= 0 and density_gap(A, b)[0] <= tol:
            assert A.dist(b) <= math.sqrt(2 * tol) + 1e-12


def test_maximal_linear_graphs_certify(rng):
    for _ in range(10):
        G = rng.standard_normal((2, 2))
        K = rng.standard_normal((2, 2))
        A = OperatorGraph(product_space(2), G @ G.T + K - K.T)
        cand = rng.standard_normal((10, 4))
        assert maximality_probe(A, cand).verdict == "maximal-on-candidates"
        assert certify_quasidense(A, default_probe_grid(A.space, 3, 1.0)).quasidense


def test_exact_ball_gap_matches_constrained_solver(rng):
    from snmono.positive_sets import _ball_constrained_gap
    for _ in range(30):
        n = int(rng.integers(1, 3))
        G = rng.standard_normal((n, n))
        A = OperatorGraph(product_space(n), G @ G.T * rng.uniform(0, 1) + (G - G.T))
        c = rng.standard_normal(2 * n) * 2
        R = A.dist(c) + rng.uniform(0.0, 2.0)
        exact = A.gap_in_ball(c, R)
        slsqp = _ball_constrained_gap(A.space, lambda z: A.origin + A.basis @ z, A.rank, c, R,
                                      A.basis.T @ (c - A.origin))
        assert exact <= slsqp + 1e-9
        assert exact == pytest.approx(slsqp, abs=1e-6)
    A = OperatorGraph(product_space(1), [[1.0]])
    assert A.gap_in_ball([1.0, -1.0], 1.3) == math.inf
