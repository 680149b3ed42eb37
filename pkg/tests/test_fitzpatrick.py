import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snmono._optim import lattice
from snmono.convex_fn import preconjugate
from snmono.fitzpatrick import (FitzpatrickFn, density_via_marker, extension_membership,
                                identity_phi, is_marker, phi, phi_conjugate, theta, theta_grid)
from snmono.mono_ops import LinearMap, SubdiffMap
from snmono.convex_fn import NormPower
from snmono.positive_sets import FiniteCloud, OperatorGraph, SequenceGraph
from snmono.sn_core import dual_space, product_space


@pytest.fixture
def singleton():
    return FiniteCloud(product_space(1), [[0.0, 0.0]])


def test_phi_identity_closed_form(identity_graph, rng):
    for b in rng.uniform(-3, 3, (50, 2)):
        assert phi(identity_graph, b) == pytest.approx(identity_phi(*b), abs=1e-10)


def test_phi_on_set_is_q(identity_graph):
    for s in (-2.0, 0.0, 1.5):
        a = np.array([s, s])
        assert phi(identity_graph, a) == pytest.approx(s * s)


def test_phi_singleton(singleton):
    assert phi(singleton, [1.0, 1.0]) == 0.0


def test_theta_examples(identity_graph, singleton, rng):
    L = identity_graph.space.L
    for b in rng.standard_normal((10, 2)):
        assert theta(identity_graph, L @ b) == pytest.approx(phi(identity_graph, b))
        assert theta(singleton, b) == 0.0
        assert theta(identity_graph, b) == pytest.approx((b[0] + b[1]) ** 2 / 4)


def test_theta_composed_with_L_is_phi_on_cloud(rng):
    A = FiniteCloud(product_space(2), rng.standard_normal((8, 4)))
    for b in rng.standard_normal((10, 4)):
        assert theta(A, A.space.L @ b) == pytest.approx(phi(A, b))


def test_phi_conjugate_at_image_of_set(identity_graph):
    d = dual_space(identity_graph.space)
    for s in (-1.0, 0.5, 2.0):
        La = identity_graph.space.L @ np.array([s, s])
        assert phi_conjugate(identity_graph, La) == pytest.approx(d.q(La), abs=1e-10)


def test_phi_conjugate_singleton(singleton):
    # Phi is identically 0, so its conjugate is the indicator of {0}
    assert phi_conjugate(singleton, [0.0, 0.0]) == 0.0
    assert phi_conjugate(singleton, [0.3, 0.0]) == math.inf
    f = FitzpatrickFn(singleton)
    grid = lattice([(-5, 5, 0.5), (-5, 5, 0.5)])
    from snmono.convex_fn import legendre_oracle
    assert legendre_oracle(f, [0.3, 0.0], grid) >= 1.0


def test_phi_conjugate_dominates_theta(rng):
    sets = [OperatorGraph(product_space(1), [[1.0]]),
            OperatorGraph(product_space(2), [[1.0, 2.0], [-2.0, 0.0]]),
            FiniteCloud(product_space(1), [[0.0, 0.0], [1.0, 1.0], [-1.0, -2.0]])]
    for A in sets:
        for bs in rng.standard_normal((100, A.space.dim)):
            ps = phi_conjugate(A, bs)
            assert ps >= theta(A, bs) - 1e-8 * (1 + abs(ps) if math.isfinite(ps) else 1)


def test_marker_examples(identity_graph, rng):
    samples = rng.uniform(-2, 2, (40, 2))
    assert is_marker(identity_graph, lambda b: phi_conjugate(identity_graph, b), samples).ok
    assert is_marker(identity_graph, lambda b: theta(identity_graph, b), samples).ok
    rep = is_marker(identity_graph, lambda b: theta(identity_graph, b) - 1, samples)
    assert rep.verdict == "refuted" and rep.violated == "g >= Theta_A"


def test_marker_convex_combination(identity_graph, rng):
    samples = rng.uniform(-2, 2, (40, 2))
    g = lambda b: 0.5 * phi_conjugate(identity_graph, b) + 0.5 * theta(identity_graph, b)
    assert is_marker(identity_graph, g, samples).ok


def test_density_via_marker_examples(identity_graph, singleton, rng):
    samples = rng.uniform(-2, 2, (40, 2))
    assert density_via_marker(identity_graph, lambda b: theta(identity_graph, b), samples).ok
    rep = density_via_marker(singleton, lambda b: theta(singleton, b), [[1.0, 1.0]])
    assert rep.verdict == "refuted"


def test_density_via_marker_tail():
    # Theta_T(e*, s e_tail) <= 1/2 while the pairing is s, so the tail graph fails
    A = SequenceGraph("tail", 3)
    n = A.N + 1
    bs = np.concatenate([np.ones(n), np.zeros(n)])
    bs[-1] = 1.0
    assert theta(A, bs) <= 0.5 + 1e-9
    rep = density_via_marker(A, lambda b: theta(A, b), [bs], tol=1e-6)
    assert rep.verdict == "refuted"


def test_extension_membership_examples(identity_graph):
    La = identity_graph.space.L @ np.array([1.5, 1.5])
    assert extension_membership(identity_graph, La).member
    off = extension_membership(identity_graph, [1.0, -1.0])
    assert not off.member and off.theta_value == pytest.approx(0.0) and off.q_dual == -1.0
    assert extension_membership(identity_graph, [1.0, 1.0]).member


def test_phi_above_q_with_equality_on_set(rng):
    A = OperatorGraph(product_space(2), [[2.0, 1.0], [-1.0, 1.0]])
    for b in rng.standard_normal((100, 4)) * 2:
        assert phi(A, b) >= A.space.q(b) - 1e-8
    for a in A.sample(50, rng):
        assert phi(A, a) == pytest.approx(A.space.q(a), abs=1e-8)


def test_circled_fitzpatrick_above_phi_and_coincides_on_set(rng):
    A = OperatorGraph(product_space(2), [[1.0, 1.0], [-1.0, 2.0]])
    f = FitzpatrickFn(A)
    for b in rng.standard_normal((50, 4)):
        assert f.circled(b) >= f.evaluate(b) - 1e-8
        on = abs(f.circled(b) - A.space.q(b)) <= 1e-8
        assert on == A.contains(b)
    for a in A.sample(20, rng):
        assert f.circled(a) == pytest.approx(A.space.q(a), abs=1e-8)


def test_preconjugate_of_marker_grid(identity_graph):
    grid = lattice([(-3, 3, 0.1), (-3, 3, 0.1)])
    g = theta_grid(identity_graph, grid)
    sp = identity_graph.space
    for b in lattice([(-1, 1, 0.5), (-1, 1, 0.5)]):
        # grid sup is a lower bound, hence the one-sided error allowance
        assert preconjugate(g, b) >= sp.q(b) - 2e-2
    for s in (-1.0, 0.0, 1.0):
        a = np.array([s, s])
        assert preconjugate(g, a) == pytest.approx(sp.q(a), abs=1e-2)


def test_marker_coincidence_sets_agree(rng):
    A = OperatorGraph(product_space(1), [[2.0]])
    d = dual_space(A.space)
    pts = np.vstack([rng.standard_normal((40, 2)), [A.space.L @ a for a in A.sample(40, rng)]])
    for bs in pts:
        on_phi = abs(phi_conjugate(A, bs) - d.q(bs)) <= 1e-8 * (1 + abs(d.q(bs)))
        on_theta = abs(theta(A, bs) - d.q(bs)) <= 1e-8 * (1 + abs(d.q(bs)))
        assert on_phi == on_theta


def test_extension_is_monotone(rng):
    A = SubdiffMap(NormPower(1)).graph_set()
    members = []
    for a in A.sample(30, rng):
        # Theta on a resolvent-parametrized graph is a numerical sup, accurate to about 1e-6
        rec = extension_membership(A, A.space.L @ a, tol=1e-5)
        if rec.member:
            members.append(rec.bstar)
    assert len(members) >= 20
    d = dual_space(A.space)
    for b1 in members:
        for b2 in members:
            assert d.q(b1 - b2) >= -1e-8


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.one_of(st.just(0.0), st.floats(1e-3, 3), st.floats(-3, -1e-3)))
def test_identity_extension_is_image_of_graph(y, offset):
    # points within sqrt(tol) of the graph are borderline for the Theta route,
    # so off-graph samples keep a clear distance
    A = OperatorGraph(product_space(1), [[1.0]])
    rec = extension_membership(A, [y, y + offset])
    assert rec.routes_agree
    assert rec.member == (offset == 0.0)
