"""Fitzpatrick functions Phi_A and Theta_A, their conjugates, marker
functions and the Fitzpatrick extension A^F in the dual space."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import linprog

from ._optim import DEFAULT_BUDGET, INF, Budget, as_vector, null_basis, quadratic_sup
from .convex_fn import ConvexFn, GridFunction, NoClosedForm, Quadratic, legendre_oracle
from .positive_sets import FiniteCloud, GraphSet, LinearSubspace, LPositiveSet
from .sn_core import SnSpace, dual_space, s_L


def phi(A: LPositiveSet, b, budget: Budget = DEFAULT_BUDGET) -> float:
    """Phi_A(b) = sup_A [<a, Lb> - q_L(a)], evaluated as q_L(b) - inf q_L(A - b)."""
    b = A.space.point(b)
    m = A.inf_q(b, budget)
    if m == -INF:
        return INF
    return A.space.q(b) - m


def theta(A: LPositiveSet, bstar, budget: Budget = DEFAULT_BUDGET) -> float:
    """Theta_A(b*) = sup_A [<a, b*> - q_L(a)]."""
    return A.sup_theta(bstar, budget)


def phi_quadratic(A: LinearSubspace) -> Quadratic:
    """Phi_A for an affine subspace A = o + span V as a quadratic on its domain."""
    space = A.space
    L, V, o = space.L, A.basis, A.origin
    K = V.T @ L @ V
    # Phi_A(b) = sup_z [z'V'L(b - o) - 1/2 z'Kz] + <o, Lb> - q_L(o)
    w, U = np.linalg.eigh(0.5 * (K + K.T)) if K.size else (np.zeros(0), np.zeros((0, 0)))
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    if w.size and w[0] < -1e-9 * scale:
        raise ValueError("set is not L-positive")
    pos = w > 1e-10 * scale
    Up, Un = U[:, pos], U[:, ~pos]
    Kp = Up @ np.diag(1.0 / w[pos]) @ Up.T if pos.any() else np.zeros_like(K)
    R = V.T @ L
    Q = R.T @ Kp @ R
    bvec = L @ o - R.T @ Kp @ (R @ o)
    c = 0.5 * float((R @ o) @ Kp @ (R @ o)) - space.q(o)
    M = Un.T @ R
    if M.shape[0] == 0:
        return Quadratic(Q, bvec, c)
    b0 = np.linalg.lstsq(M, M @ o, rcond=None)[0]
    return Quadratic(Q, bvec, c, origin=b0, basis=null_basis(M))


def _cloud_phi_conjugate(A: FiniteCloud, bstar: np.ndarray) -> float:
    # Phi_A = max_i [<L a_i, .> - q_L(a_i)]; its conjugate is a small LP over the simplex
    space = A.space
    P = A.points
    ell = P @ space.L
    qa = space.q_many(P)
    m = P.shape[0]
    A_eq = np.vstack([ell.T, np.ones((1, m))])
    b_eq = np.concatenate([bstar, [1.0]])
    res = linprog(qa, A_eq=A_eq, b_eq=b_eq, bounds=[(0.0, None)] * m, method="highs")
    if res.status == 2:
        return INF
    if res.status != 0:
        raise RuntimeError(f"linear program failed: {res.message}")
    return float(res.fun)


def phi_conjugate(A: LPositiveSet, bstar, budget: Budget = DEFAULT_BUDGET,
                  grid: Optional[np.ndarray] = None) -> float:
    """Phi_A^*(b*): exact for subspaces (quadratic), clouds (LP) and map graphs
    with a closed-form circled conjugate; grid oracle otherwise."""
    bstar = A.space.point(bstar)
    if isinstance(A, LinearSubspace):
        return phi_quadratic(A).conjugate(bstar)
    if isinstance(A, FiniteCloud):
        return _cloud_phi_conjugate(A, bstar)
    if isinstance(A, GraphSet):
        # Phi^*(b*) = Phi^(circled *)(L b*) since L is an involution on E x E*
        try:
            return A.map.phi_circled().evaluate(A.space.L @ bstar)
        except NotImplementedError:
            pass
    if grid is None:
        raise NoClosedForm("phi conjugate for this representation needs a grid")
    f = FitzpatrickFn(A, budget)
    return legendre_oracle(f, bstar, grid)


class FitzpatrickFn(ConvexFn):
    """Phi_A as a member of the convex-function family."""

    tag = "fitzpatrick"

    def __init__(self, A: LPositiveSet, budget: Budget = DEFAULT_BUDGET):
        self.A, self.budget = A, budget
        self.dim = A.space.dim
        self._quad = phi_quadratic(A) if isinstance(A, LinearSubspace) else None

    def evaluate(self, x) -> float:
        if self._quad is not None:
            return self._quad.evaluate(x)
        return phi(self.A, x, self.budget)

    def conjugate(self, y) -> float:
        return phi_conjugate(self.A, y, self.budget)

    def prox(self, v, t: float = 1.0) -> np.ndarray:
        if self._quad is not None:
            return self._quad.prox(v, t)
        return super().prox(v, t)

    def has_exact_prox(self) -> bool:
        return self._quad is not None

    def circled(self, b) -> float:
        """Phi_A^(circled *)(b) = Phi_A^*(Lb)."""
        return self.conjugate(self.A.space.L @ self.A.space.point(b))

    def to_dict(self) -> dict:
        return {"family": "fitzpatrick-of", "set": self.A.to_dict()}


MarkerLike = Union[ConvexFn, Callable[[np.ndarray], float]]


def _call(g: MarkerLike, x: np.ndarray) -> float:
    if isinstance(g, ConvexFn):
        return g.evaluate(x)
    return float(g(x))


@dataclass
class MarkerVerdict:
    verdict: str
    witness: Optional[np.ndarray] = None
    violated: Optional[str] = None
    margins: Optional[list] = None

    @property
    def ok(self) -> bool:
        return self.verdict in ("marker-on-grid", "consistent")

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "violated": self.violated,
                "witness": None if self.witness is None else self.witness.tolist()}


def is_marker(A: LPositiveSet, g: MarkerLike, dual_samples, tol: float = 1e-8,
              budget: Budget = DEFAULT_BUDGET) -> MarkerVerdict:
    """Theta_A <= g <= Phi_A^* at every dual sample."""
    for bs in np.atleast_2d(dual_samples):
        gv = _call(g, bs)
        th = theta(A, bs, budget)
        if gv < th - tol * (1.0 + abs(th) if math.isfinite(th) else 1.0) or (th == INF and gv < INF):
            return MarkerVerdict("refuted", np.asarray(bs, float), "g >= Theta_A")
        ps = phi_conjugate(A, bs, budget)
        if ps < INF and gv > ps + tol * (1.0 + abs(ps)):
            return MarkerVerdict("refuted", np.asarray(bs, float), "g <= Phi_A^*")
    return MarkerVerdict("marker-on-grid")


def density_via_marker(A: LPositiveSet, g: MarkerLike, dual_samples, tol: float = 1e-8,
                       budget: Budget = DEFAULT_BUDGET) -> MarkerVerdict:
    """g >= s_L at every dual sample (r_L-density test through a marker)."""
    margins = []
    for bs in np.atleast_2d(dual_samples):
        gv = _call(g, bs)
        sl = s_L(A.space, bs, budget)
        m = INF if gv == INF else (-INF if sl == INF else gv - sl)
        margins.append(m)
        if m < -tol:
            return MarkerVerdict("refuted", np.asarray(bs, float), "g >= s_L", margins)
    return MarkerVerdict("consistent", margins=margins)


@dataclass
class ExtensionMembership:
    bstar: np.ndarray
    phi_star: float
    theta_value: float
    q_dual: float
    member: bool
    routes_agree: bool

    def to_dict(self) -> dict:
        return {"bstar": self.bstar.tolist(), "phi_star": self.phi_star, "theta": self.theta_value,
                "q_dual": self.q_dual, "member": self.member, "routes_agree": self.routes_agree}


class RouteDisagreement(RuntimeError):
    """The Phi^* and Theta characterizations of A^F disagree beyond tolerance."""


def extension_membership(A: LPositiveSet, bstar, tol: float = 1e-8,
                         budget: Budget = DEFAULT_BUDGET, strict: bool = True) -> ExtensionMembership:
    """b* in A^F, decided by Phi_A^* = q_L~ and cross-checked by Theta_A = q_L~."""
    space = A.space
    dspace = dual_space(space)
    bstar = space.point(bstar)
    qd = dspace.q(bstar)
    ps = phi_conjugate(A, bstar, budget)
    th = theta(A, bstar, budget)
    scale = 1.0 + abs(qd)
    d1 = abs(ps - qd) if math.isfinite(ps) else INF
    d2 = abs(th - qd) if math.isfinite(th) else INF
    m1, m2 = d1 <= tol * scale, d2 <= tol * scale
    # borderline values within ten tolerances on both routes count as agreement
    agree = m1 == m2 or max(d1, d2) <= 10 * tol * scale
    if not agree and strict:
        raise RouteDisagreement(f"Phi^* route {ps}, Theta route {th}, q~ {qd}")
    return ExtensionMembership(bstar, ps, th, qd, m1, agree)


def theta_grid(A: LPositiveSet, points, budget: Budget = DEFAULT_BUDGET) -> GridFunction:
    """Theta_A sampled on a grid of B*, as a GridFunction."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return GridFunction(pts, [theta(A, p, budget) for p in pts])


def identity_phi(x: float, xstar: float) -> float:
    """Closed form (x + x*)^2/4 of the Fitzpatrick function of the identity on R."""
    return 0.25 * (x + xstar) ** 2
