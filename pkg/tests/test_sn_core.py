import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from snmono.sn_core import (NormKind, SnSpace, coordinate_swap_space, dual_coincidence_point,
                            dual_space, negated_identity_space, product_space, q_L, r_L, s_L,
                            s_L_bound, scaled_identity_space, validate_sn)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def vec(n):
    return arrays(np.float64, n, elements=finite)


def test_validate_identity_ok():
    assert validate_sn(scaled_identity_space(3, 1.0)).ok


def test_validate_twice_identity_fails():
    rep = validate_sn(scaled_identity_space(2, 2.0))
    assert not rep.ok
    assert rep.condition == "nonexpansiveness"
    assert rep.opnorm == pytest.approx(2.0)


def test_validate_product_space_ok():
    for primal in ("euclidean", "ell1", "ellinf"):
        assert validate_sn(product_space(2, primal)).ok


def test_validate_asymmetric_fails():
    sp = SnSpace(2, NormKind("euclidean"), [[0.0, 0.5], [0.0, 0.0]])
    rep = validate_sn(sp)
    assert not rep.ok and rep.condition == "symmetry"


def test_product_norm_blocks_must_be_dual():
    with pytest.raises(ValueError):
        NormKind("product", (NormKind("ell1"), NormKind("ell1")))
    assert str(NormKind.parse("product(ell1,ellinf)")) == "product(ell1,ellinf)"


def test_q_product_is_pairing():
    sp = product_space(2)
    assert q_L(sp, [1.0, 2.0, 3.0, -4.0]) == pytest.approx(1 * 3 + 2 * -4)
    assert q_L(sp, np.zeros(4)) == 0.0


def test_coordinate_swap_values():
    sp = coordinate_swap_space(1.0)
    assert q_L(sp, [1, 2, 3]) == pytest.approx(6.5)
    assert r_L(sp, [1, 2, 3]) == pytest.approx(13.5)


def test_scaled_identity_r():
    sp = scaled_identity_space(2, 0.5)
    b = np.array([2.0, 0.0])
    assert r_L(sp, b) == pytest.approx(3.0)


def test_negated_identity_r_vanishes(rng):
    sp = negated_identity_space(3, 1.0)
    for b in rng.standard_normal((20, 3)):
        assert abs(r_L(sp, b)) <= 1e-12


def test_s_zero_map():
    sp = SnSpace(2, NormKind("euclidean"), np.zeros((2, 2)))
    assert s_L(sp, [0.0, 0.0]) == 0.0
    assert s_L(sp, [1.0, 0.0]) == math.inf


def test_s_zero_map_non_euclidean():
    sp = SnSpace(2, NormKind("ell1"), np.zeros((2, 2)))
    assert s_L(sp, [0.0, 1.0]) == math.inf


def test_s_hilbert_formula(rng):
    for lam in (0.25, 0.5, 1.0):
        sp = scaled_identity_space(3, lam)
        b = rng.standard_normal(3)
        assert s_L(sp, b) == pytest.approx(0.5 * b @ b / lam, rel=1e-10)


def test_s_product_is_pairing(rng):
    sp = product_space(2)
    b = rng.standard_normal(4)
    assert s_L(sp, b) == pytest.approx(b[:2] @ b[2:], abs=1e-9)


def test_s_product_ell1_is_pairing():
    sp = product_space(2, "ell1")
    b = np.array([0.5, -1.0, 2.0, 0.25])
    assert s_L(sp, b) == pytest.approx(b[:2] @ b[2:], abs=1e-5)


def test_s_negated_identity():
    # with L = -I the objective is the constant -1/2|b*|^2; for lam < 1 it grows quadratically
    b = np.array([1.0, -2.0])
    assert s_L(negated_identity_space(2, 1.0), b) == pytest.approx(-2.5)
    assert s_L_bound(negated_identity_space(2, 0.5), b).verdict == "infinite"


def test_dual_space_of_product():
    d = dual_space(product_space(1))
    assert q_L(d, [2.0, 3.0]) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        dual_space(scaled_identity_space(2, 1.0))


def test_dual_coincidence_point(rng):
    for primal in ("euclidean", "ell1", "ellinf"):
        sp = product_space(2, primal)
        d = dual_space(sp)
        for bs in rng.standard_normal((10, 4)):
            y = dual_coincidence_point(sp, bs)
            assert r_L(d, sp.L @ y - bs) <= 1e-12 * (1 + bs @ bs)


def test_space_roundtrip():
    sp = product_space(2, "ell1")
    back = SnSpace.from_dict(sp.to_dict())
    assert back.norm_kind == sp.norm_kind and np.array_equal(back.L, sp.L)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        SnSpace(3, NormKind("euclidean"), np.eye(2))
    with pytest.raises(ValueError):
        q_L(product_space(1), [1.0, 2.0, 3.0])


SPACES = [scaled_identity_space(4, 0.5), negated_identity_space(4, 0.3),
          product_space(2), product_space(2, "ell1"), product_space(2, "ellinf")]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(SPACES), vec(4), vec(4))
def test_symmetry(sp, b, c):
    assert abs(b @ sp.L @ c - c @ sp.L @ b) <= 1e-12 * (1 + abs(b @ sp.L @ c))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(SPACES), vec(4))
def test_r_between_zero_and_norm_squared(sp, b):
    r = r_L(sp, b)
    nb = sp.norm(b) ** 2
    assert -1e-9 * (1 + nb) <= r <= nb * (1 + 1e-12) + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(SPACES), vec(4), vec(4))
def test_r_lipschitz_type_bound(sp, b, d):
    lhs = abs(r_L(sp, b) - r_L(sp, d))
    rhs = sp.norm(b - d) * (sp.norm(b) + sp.norm(d))
    assert lhs <= rhs + 1e-9 * (1 + rhs)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(SPACES), vec(4))
def test_even(sp, b):
    assert q_L(sp, -b) == q_L(sp, b)
    assert r_L(sp, -b) == r_L(sp, b)


@settings(max_examples=40, deadline=None)
@given(vec(4), st.floats(-5, 5, allow_nan=False).filter(lambda t: abs(t) > 1e-3))
def test_s_quadratic_homogeneity(bs, t):
    for sp in (scaled_identity_space(4, 0.5), product_space(2)):
        a, b = s_L(sp, t * bs), s_L(sp, bs)
        assert a == pytest.approx(t * t * b, rel=1e-6, abs=1e-9)


def test_bounded_sublevel_radius(rng):
    # f + 1/2|.|^2 within m + 1 of its minimum forces |y| <= |z| + 3
    from snmono.convex_fn import NormPower, Quadratic
    for f in (NormPower(2, 1.0, 1), Quadratic(np.diag([2.0, 0.5]), [1.0, -1.0]), NormPower(2, 1.0, 2)):
        g = lambda x: f.evaluate(x) + 0.5 * x @ x
        z = f.prox(np.zeros(2))
        m = g(z)
        for _ in range(200):
            y = rng.standard_normal(2) * rng.uniform(0, 4)
            if g(y) <= m + 1:
                assert np.linalg.norm(y) <= np.linalg.norm(z) + 3 + 1e-12
