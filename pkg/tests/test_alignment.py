import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import minimize_scalar

from snmono.alignment import (alignment_library, alignment_tau, ana_probe, graph_norm_bound,
                              midpoint_gap_bound, norm_gap_inequality, pairing_infimum,
                              positive_pair_bound, quasidense_via_alignment,
                              random_monotone_cloud, sqrt_gap_bound, zagrodny_check)
from snmono.convex_fn import Indicator, NormPower, Quadratic
from snmono.fitzpatrick import FitzpatrickFn
from snmono.mono_ops import DeformedMap, LinearMap, SubdiffMap
from snmono.positive_sets import FiniteCloud, SequenceGraph
from snmono.sn_core import negated_identity_space, product_space

IDENT = LinearMap([[1.0]])


def test_tau_zero_on_graph():
    res = alignment_tau(IDENT, [1.5], [1.5])
    assert res.tau == pytest.approx(0.0, abs=1e-9)


def test_tau_identity_off_graph():
    res = alignment_tau(IDENT, [1.0], [-1.0])
    assert res.tau == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(res.witness, 0.0, atol=1e-9)
    assert res.holds() and res.spread <= 1e-4


def test_tau_scaled_closed_form():
    # witness s with s - w = alpha*tau*u, s* - w* = -beta*tau*u for identity
    res = alignment_tau(IDENT, [2.0], [0.0], alpha=2.0, beta=0.5)
    assert res.tau == pytest.approx(0.8, abs=1e-8)
    assert res.witness[0] == pytest.approx(res.witness[1], abs=1e-9)


def test_tau_unique_over_restarts():
    for case in alignment_library()[:8]:
        res = alignment_tau(case["map"], case["w"], case["wstar"], case["alpha"], case["beta"])
        assert res.spread <= 1e-4, case["name"]
        # the two distances agree in the limit
        assert abs(res.dist_primal / res.alpha - res.dist_dual / res.beta) <= 1e-6


def test_tau_matches_numeric_search():
    # independent of the closed-form Minty point: seeded searches over the graph
    for case in alignment_library():
        S = case["map"]
        if S.n != 1:
            continue
        a, b = case["alpha"], case["beta"]
        res = alignment_tau(S, case["w"], case["wstar"], a, b)
        w = np.array([case["w"][0] / a, case["wstar"][0] / b])
        D = DeformedMap(S, a, b)
        for seed in range(5):
            z0 = np.random.default_rng(seed).standard_normal() * 3

            def obj(z):
                x = D.resolvent([z])[0]
                return 0.5 * ((x - w[0]) + (z - x - w[1])) ** 2

            z = minimize_scalar(obj, bracket=(z0 - 1.0, z0 + 1.0), tol=1e-12).x
            x = D.resolvent([z])[0]
            tau = 0.5 * (abs(x - w[0]) + abs(z - x - w[1]))
            assert abs(tau - res.tau) <= 1e-4, case["name"]


def test_tau_below_one_when_pairing_bounded():
    # inf <s - w, s* - w*> > -alpha*beta forces tau < 1
    rng = np.random.default_rng(3)
    for case in alignment_library():
        S, w, ws, a, b = case["map"], case["w"], case["wstar"], case["alpha"], case["beta"]
        inf = pairing_infimum(S, w, ws)
        if inf > -a * b + 1e-3:
            assert alignment_tau(S, w, ws, a, b).tau < 1.0


def test_alignment_rejects_bad_input():
    with pytest.raises(ValueError):
        alignment_tau(IDENT, [1.0], [0.0], alpha=0.0)
    A = FiniteCloud(negated_identity_space(2, 1.0), [[0.0, 0.0]])
    with pytest.raises(ValueError):
        alignment_tau(A, [1.0], [0.0])


def test_via_alignment_identity():
    v = quasidense_via_alignment(IDENT)
    assert v.verdict == "consistent-with-quasidense"
    assert v.certificate == "quasidense-on-grid" and v.agrees


def test_via_alignment_tail():
    A = SequenceGraph("tail", 40)
    v = quasidense_via_alignment(A, [A.e_star()])
    assert v.verdict == "no-alignment-found"
    assert v.certificate == "refuted" and v.agrees


def test_via_alignment_fallback_geometry():
    # alignment is undefined off E x E*; r_L vanishes identically here
    A = FiniteCloud(negated_identity_space(2, 1.0), [[0.0, 0.0]])
    v = quasidense_via_alignment(A)
    assert v.verdict == "consistent-with-quasidense" and v.agrees
    assert all(r["route"] == "r_L-density" for r in v.records)


def test_via_alignment_singleton_refuted():
    A = FiniteCloud(product_space(1), [[0.0, 0.0]])
    v = quasidense_via_alignment(A)
    assert v.verdict == "no-alignment-found"
    assert v.certificate == "refuted" and v.agrees


def test_ana_identity():
    res = ana_probe(IDENT, [1.0], [-1.0], epsilon=0.01)
    assert res.verdict == "found"
    assert res.cosine <= -0.99
    assert np.allclose(res.witness, 0.0, atol=1e-6)


def test_ana_linear_maps(rng):
    for _ in range(5):
        G = rng.standard_normal((2, 2))
        S = LinearMap(G @ G.T + (G - G.T))
        w, ws = rng.standard_normal(2), rng.standard_normal(2)
        assert ana_probe(S, w, ws).verdict == "found"


def test_ana_rejects_member():
    with pytest.raises(ValueError):
        ana_probe(IDENT, [1.0], [1.0])


def test_zagrodny_examples(rng):
    A = random_monotone_cloud(2, 10, rng)
    a = A.points[3]
    assert zagrodny_check(A.points, a, a, A.space) == pytest.approx(0.0, abs=1e-12)
    for _ in range(50):
        b = rng.standard_normal(4) * 3
        assert zagrodny_check(A.points, A.points[rng.integers(10)], b, A.space) >= -1e-9
    with pytest.raises(ValueError):
        zagrodny_check(A.points, np.full(4, 99.0), a, A.space)


@pytest.mark.parametrize("norm", ["euclidean", "ell1", "ellinf"])
def test_zagrodny_random_clouds(norm, rng):
    for _ in range(30):
        n = int(rng.integers(1, 5))
        A = random_monotone_cloud(n, 8, rng, norm)
        for a in A.points:
            b = rng.standard_normal(2 * n) * rng.uniform(0.1, 4)
            assert zagrodny_check(A.points, a, b, A.space) >= -1e-9


def test_graph_norm_bound(rng):
    for _ in range(50):
        A = random_monotone_cloud(2, 6, rng)
        w = rng.standard_normal(4) * 2
        for s in A.points:
            assert graph_norm_bound(A.points, s, w, A.space) >= -1e-9


def test_positive_pair_bound(rng):
    for _ in range(50):
        A = random_monotone_cloud(2, 4, rng, "ell1")
        d, e = A.points[0], A.points[1]
        assert positive_pair_bound(A.space, d, e) >= -1e-9
    sp = product_space(1)
    with pytest.raises(ValueError):
        positive_pair_bound(sp, [1.0, -1.0], [0.0, 0.0])


SPACES = [product_space(2), product_space(2, "ell1"), product_space(2, "ellinf")]


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(SPACES), arrays(np.float64, 4, elements=st.floats(-10, 10)),
       arrays(np.float64, 4, elements=st.floats(-10, 10)))
def test_norm_gap_inequality(sp, d, e):
    assert norm_gap_inequality(sp, d, e) >= -1e-9 * (1 + sp.norm(d) + sp.norm(e))


def pcq_quadratic(rng, sp):
    # f = q_L + a convex quadratic whose minimum is exactly 0, so f touches q_L
    M = rng.standard_normal((sp.dim, sp.dim))
    P, g = M @ M.T + np.eye(sp.dim), rng.standard_normal(sp.dim)
    return Quadratic(sp.L + P, g, 0.5 * g @ np.linalg.solve(P, g))


def test_midpoint_and_sqrt_bounds(rng):
    sp = product_space(2)
    for _ in range(50):
        f = pcq_quadratic(rng, sp)
        assert Quadratic(f.Q - sp.L, f.b, f.c).minimize()[0] == pytest.approx(0.0, abs=1e-9)
        a, c = rng.standard_normal((2, 4)) * 2
        assert midpoint_gap_bound(sp, f, a, c) >= -1e-9
        assert sqrt_gap_bound(sp, f, a, c) >= -1e-9


def test_bounds_with_fitzpatrick(rng):
    A = LinearMap([[1.0, 2.0], [-2.0, 0.5]]).graph_set()
    f = FitzpatrickFn(A)
    for a, c in rng.standard_normal((50, 2, 4)) * 2:
        assert midpoint_gap_bound(A.space, f, a, c) >= -1e-9
        assert sqrt_gap_bound(A.space, f, a, c) >= -1e-9


def test_domain_projection_convex_for_interval(rng):
    # the first projection of a quasidense set has convex closure; spot check on a box
    S = SubdiffMap(Indicator(1, lo=[0.0], hi=[1.0]))
    pts = S.sample(40, rng)
    xs = pts[:, 0]
    for _ in range(50):
        i, j = rng.integers(0, 40, 2)
        t = rng.uniform()
        m = t * xs[i] + (1 - t) * xs[j]
        assert S.contains([m], [0.0])


def test_library_shape():
    lib = alignment_library()
    assert len(lib) == 20
    assert len({c["name"] for c in lib}) == 20
