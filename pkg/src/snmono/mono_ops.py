"""Monotone multifunctions on E x E*: representations, sums, parallel sums,
partial inf-convolutions, deformations and the tail/head operator family."""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._optim import DEFAULT_BUDGET, INF, Budget, as_vector, lattice
from .convex_fn import (ConvexFn, EmptyFn, Indicator, NormPower, Quadratic, SeparablePair, SumOf,
                        convex_minimize, from_dict as convex_from_dict, in_subdifferential,
                        legendre_oracle)
from .fitzpatrick import FitzpatrickFn, phi_quadratic
from .positive_sets import (FiniteCloud, GraphSet, LinearSubspace, LPositiveSet, OperatorGraph,
                            SequenceGraph)
from .sn_core import SnSpace, product_space, swap_matrix


class NoResolvent(NotImplementedError):
    """The representation has no resolvent routine."""


class MonoMap:
    """A monotone multifunction R^n -> R^n given through its graph."""

    kind = "abstract"
    n: int

    def resolvent(self, v, t: float = 1.0) -> np.ndarray:
        """J_{tS}(v): the x with v in x + tS(x)."""
        raise NoResolvent(self.kind)

    @property
    def has_resolvent(self) -> bool:
        try:
            self.resolvent(np.zeros(self.n))
        except NoResolvent:
            return False
        return True

    def contains(self, x, xstar, tol: float = 1e-8) -> bool:
        """(x, x*) in G(S), decided by the fixed-point test x = J_S(x + x*)."""
        x, xstar = as_vector(x, self.n), as_vector(xstar, self.n)
        y = self.resolvent(x + xstar)
        return float(np.linalg.norm(y - x)) <= tol * (1.0 + np.linalg.norm(x) + np.linalg.norm(xstar))

    def selection(self, x) -> Optional[np.ndarray]:
        """The unique element of S(x) when S is known to be single-valued there."""
        return None

    @property
    def full_domain(self) -> bool:
        """True when D(S) is known to be all of R^n."""
        return False

    def graph_set(self, space: Optional[SnSpace] = None) -> LPositiveSet:
        return GraphSet(space or product_space(self.n), self)

    def minty_point(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = as_vector(z, self.n)
        x = self.resolvent(z)
        return x, z - x

    def sample(self, k: int, rng: np.random.Generator, scale: float = 2.0) -> np.ndarray:
        """k graph points (x, x*) as rows, through Minty's parametrization."""
        Z = scale * rng.standard_normal((k, self.n))
        return np.array([np.concatenate(self.minty_point(z)) for z in Z])

    def phi_circled(self) -> ConvexFn:
        """(x, x*) -> phi_S^(circled *)(x, x*) = phi_S^*(x*, x)."""
        raise NotImplementedError(f"no closed-form circled conjugate for {self.kind}")

    def to_dict(self) -> dict:
        raise NotImplementedError(f"{self.kind} is not serializable")


class LinearMap(MonoMap):
    """x -> Mx + m, monotone iff M + M' is positive semidefinite."""

    kind = "linear"
    full_domain = True

    def __init__(self, M, offset=None):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape[0] != M.shape[1]:
            raise ValueError("M must be square")
        self.M = M
        self.n = M.shape[0]
        self.offset = np.zeros(self.n) if offset is None else as_vector(offset, self.n)

    def is_monotone(self, tol: float = 1e-12) -> bool:
        return float(np.min(np.linalg.eigvalsh(self.M + self.M.T))) >= -tol

    def resolvent(self, v, t: float = 1.0) -> np.ndarray:
        v = as_vector(v, self.n)
        return np.linalg.solve(np.eye(self.n) + t * self.M, v - t * self.offset)

    def contains(self, x, xstar, tol: float = 1e-8) -> bool:
        x, xstar = as_vector(x, self.n), as_vector(xstar, self.n)
        r = self.M @ x + self.offset - xstar
        return float(np.linalg.norm(r)) <= tol * (1.0 + np.linalg.norm(xstar))

    def selection(self, x) -> np.ndarray:
        return self.M @ as_vector(x, self.n) + self.offset

    def graph_set(self, space: Optional[SnSpace] = None) -> LPositiveSet:
        return OperatorGraph(space or product_space(self.n), self.M, self.offset)

    def phi_circled(self) -> ConvexFn:
        A = self.graph_set()
        return phi_quadratic(A).conjugate_fn().compose_affine(swap_matrix(self.n), np.zeros(2 * self.n))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "M": self.M.tolist(), "offset": self.offset.tolist()}


def _is_sublinear(k: ConvexFn) -> bool:
    if isinstance(k, NormPower):
        return k.p == 1
    if isinstance(k, Indicator):
        return k.kind == "subspace"
    if isinstance(k, SumOf):
        return all(_is_sublinear(t) for t in k.terms)
    return False


class SubdiffMap(MonoMap):
    """The subdifferential of a proper convex lsc k; its resolvent is prox_k."""

    kind = "subdiff"

    @property
    def full_domain(self) -> bool:
        # real-valued convex functions have subgradients everywhere
        k = self.k
        if isinstance(k, Quadratic):
            return k.basis is None
        return isinstance(k, NormPower)

    def __init__(self, k: ConvexFn):
        self.k = k
        self.n = k.dim

    def resolvent(self, v, t: float = 1.0) -> np.ndarray:
        return self.k.prox(as_vector(v, self.n), t)

    def contains(self, x, xstar, tol: float = 1e-8) -> bool:
        try:
            return in_subdifferential(self.k, x, xstar, tol)
        except NotImplementedError:
            return super().contains(x, xstar, tol)

    def selection(self, x) -> Optional[np.ndarray]:
        x = as_vector(x, self.n)
        return _gradient(self.k, x)

    def linear_part(self) -> Optional[LinearMap]:
        k = self.k
        if isinstance(k, Quadratic) and k.basis is None:
            return LinearMap(k.Q, k.b)
        if isinstance(k, NormPower) and k.p == 2 and k.norm.tag == "euclidean":
            return LinearMap(2 * k.alpha * np.eye(self.n))
        return None

    def graph_set(self, space: Optional[SnSpace] = None) -> LPositiveSet:
        lin = self.linear_part()
        if lin is not None:
            return lin.graph_set(space)
        return super().graph_set(space)

    def phi_circled(self) -> ConvexFn:
        lin = self.linear_part()
        if lin is not None:
            return lin.phi_circled()
        if _is_sublinear(self.k):
            # phi = k + k*, and (k + k*)^*(x*, x) = k*(x*) + k(x)
            return SeparablePair(self.k)
        raise NotImplementedError("circled conjugate needs a quadratic or sublinear k")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k.to_dict()}


def _gradient(k: ConvexFn, x: np.ndarray) -> Optional[np.ndarray]:
    if isinstance(k, Quadratic):
        return k.subgradient(x) if k.basis is None else None
    if isinstance(k, NormPower):
        if k.p == 2 and k.norm.tag == "euclidean":
            return 2 * k.alpha * x
        if k.p == 1 and k.norm.tag == "euclidean" and np.linalg.norm(x) > 0:
            return k.alpha * x / np.linalg.norm(x)
        if k.p == 1 and k.norm.tag == "ell1" and np.all(x != 0):
            return k.alpha * np.sign(x)
        return None
    if isinstance(k, SumOf):
        parts = [_gradient(t, x) for t in k.terms]
        if any(p is None for p in parts):
            return None
        return np.sum(parts, axis=0)
    return None


class FiniteGraph(MonoMap):
    """A finite monotone graph; no resolvent, gaps are exact minima."""

    kind = "finite-graph"

    def __init__(self, X, Xstar):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Xs = np.atleast_2d(np.asarray(Xstar, dtype=float))
        if X.shape != Xs.shape:
            raise ValueError("X and X* must have the same shape")
        self.X, self.Xs, self.n = X, Xs, X.shape[1]

    def contains(self, x, xstar, tol: float = 1e-8) -> bool:
        p = np.concatenate([as_vector(x, self.n), as_vector(xstar, self.n)])
        return float(np.min(np.linalg.norm(np.hstack([self.X, self.Xs]) - p, axis=1))) <= tol

    def graph_set(self, space: Optional[SnSpace] = None) -> LPositiveSet:
        return FiniteCloud(space or product_space(self.n), np.hstack([self.X, self.Xs]))

    def sample(self, k: int, rng: np.random.Generator, scale: float = 2.0) -> np.ndarray:
        idx = rng.integers(0, self.X.shape[0], size=k)
        return np.hstack([self.X[idx], self.Xs[idx]])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "X": self.X.tolist(), "Xstar": self.Xs.tolist()}


class InverseMap(MonoMap):
    """S^{-1}, with J_{tS^{-1}}(v) = v - t J_{S/t}(v/t)."""

    kind = "inverse"

    def __init__(self, S: MonoMap):
        self.S, self.n = S, S.n

    def resolvent(self, v, t: float = 1.0) -> np.ndarray:
        v = as_vector(v, self.n)
        return v - t * self.S.resolvent(v / t, 1.0 / t)

    def contains(self, x, xstar, tol: float = 1e-8) -> bool:
        return self.S.contains(xstar, x, tol)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "S": self.S.to_dict()}


class SumMap(MonoMap):
    """S + T; the resolvent is computed by Douglas-Rachford splitting."""

    kind = "sum"

    @property
    def full_domain(self) -> bool:
        return self.S.full_domain and self.T.full_domain

    def __init__(self, S: MonoMap, T: MonoMap, iters: int = 20000, tol: float = 1e-14):
        if S.n != T.n:
            raise ValueError("dimension mismatch")
        self.S, self.T, self.n = S, T, S.n
        self.iters, self.tol = iters, tol

    def resolvent(self, v, t: float = 1.0) -> np.ndarray:
        v = as_vector(v, self.n)
        # 0 in (x - v) + tSx + tTx, split as [tS + (x - v)/2] + [tT + (x - v)/2]
        JS = lambda u: self.S.resolvent((2 * u + v) / 3.0, 2 * t / 3.0)
        JT = lambda u: self.T.resolvent((2 * u + v) / 3.0, 2 * t / 3.0)
        z = v.copy()
        for _ in range(self.iters):
            x = JS(z)
            y = JT(2 * x - z)
            z = z + (y - x)
            if np.linalg.norm(y - x) <= self.tol * (1.0 + np.linalg.norm(x)):
                break
        return JS(z)

    def selection(self, x) -> Optional[np.ndarray]:
        a, b = self.S.selection(x), self.T.selection(x)
        return None if a is None or b is None else a + b

    def contains(self, x, xstar, tol: float = 1e-8) -> bool:
        x, xstar = as_vector(x, self.n), as_vector(xstar, self.n)
        s = self.S.selection(x)
        if s is not None:
            return self.T.contains(x, xstar - s, tol)
        t = self.T.selection(x)
        if t is not None:
            return self.S.contains(x, xstar - t, tol)
        return super().contains(x, xstar, tol)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "S": self.S.to_dict(), "T": self.T.to_dict()}


class DeformedMap(MonoMap):
    """The map whose graph is {(x/alpha, x*/beta) : (x, x*) in G(S)}."""

    kind = "deformed"

    def __init__(self, S: MonoMap, alpha: float, beta: float):
        if alpha <= 0 or beta <= 0:
            raise ValueError("alpha and beta must be positive")
        self.S, self.alpha, self.beta, self.n = S, float(alpha), float(beta), S.n

    def resolvent(self, v, t: float = 1.0) -> np.ndarray:
        v = as_vector(v, self.n)
        a, b = self.alpha, self.beta
        return self.S.resolvent(a * v, t * a / b) / a

    def contains(self, x, xstar, tol: float = 1e-8) -> bool:
        return self.S.contains(self.alpha * as_vector(x, self.n), self.beta * as_vector(xstar, self.n), tol)

    def selection(self, x) -> Optional[np.ndarray]:
        s = self.S.selection(self.alpha * as_vector(x, self.n))
        return None if s is None else s / self.beta

    def to_dict(self) -> dict:
        return {"kind": self.kind, "S": self.S.to_dict(), "alpha": self.alpha, "beta": self.beta}


class SequenceMap(MonoMap):
    """lam*T + mu*H on finite-support sequences of length N."""

    kind = "sequence"

    def __init__(self, op: str = "tail", N: int = 200, lam: float = 1.0, mu: float = 0.0):
        self.graph = SequenceGraph(op, N, lam, mu)
        self.n = N
        self.op = op

    def apply(self, x) -> np.ndarray:
        return combo(self.graph.lam, self.graph.mu, as_vector(x, self.n))

    def selection(self, x) -> np.ndarray:
        return self.apply(x)

    def contains(self, x, xstar, tol: float = 1e-8) -> bool:
        return float(np.max(np.abs(self.apply(x) - as_vector(xstar, self.n)))) <= tol

    def graph_set(self, space: Optional[SnSpace] = None) -> LPositiveSet:
        return self.graph

    def to_dict(self) -> dict:
        return {"kind": self.kind, "op": self.op, "N": self.n, "lam": self.graph.lam, "mu": self.graph.mu}


def map_from_dict(data: dict) -> MonoMap:
    kind = data.get("kind")
    if kind == "linear":
        return LinearMap(data["M"], data.get("offset"))
    if kind == "subdiff":
        return SubdiffMap(convex_from_dict(data["k"]))
    if kind == "finite-graph":
        return FiniteGraph(data["X"], data["Xstar"])
    if kind == "inverse":
        return InverseMap(map_from_dict(data["S"]))
    if kind == "sum":
        return SumMap(map_from_dict(data["S"]), map_from_dict(data["T"]))
    if kind == "deformed":
        return DeformedMap(map_from_dict(data["S"]), data["alpha"], data["beta"])
    if kind == "sequence":
        return SequenceMap(data.get("op", "tail"), int(data.get("N", 200)), data.get("lam", 1.0),
                           data.get("mu", 0.0))
    raise ValueError(f"unknown map kind {kind!r}")


# ---------------------------------------------------------------------------
# calculus


def op_sum(S: MonoMap, T: MonoMap) -> MonoMap:
    if S.n != T.n:
        raise ValueError("dimension mismatch")
    if isinstance(S, LinearMap) and isinstance(T, LinearMap):
        return LinearMap(S.M + T.M, S.offset + T.offset)
    if isinstance(S, SubdiffMap) and isinstance(T, SubdiffMap):
        return SubdiffMap(SumOf([S.k, T.k]))
    return SumMap(S, T)


def inverse(S: MonoMap) -> MonoMap:
    if isinstance(S, LinearMap):
        try:
            Mi = np.linalg.inv(S.M)
        except np.linalg.LinAlgError:
            return InverseMap(S)
        return LinearMap(Mi, -Mi @ S.offset)
    if isinstance(S, InverseMap):
        return S.S
    return InverseMap(S)


def parallel_sum(S: MonoMap, T: MonoMap) -> MonoMap:
    """(S^{-1} + T^{-1})^{-1}."""
    if S.n != T.n:
        raise ValueError("dimension mismatch")
    return inverse(op_sum(inverse(S), inverse(T)))


def deform_map(S: MonoMap, alpha: float, beta: float) -> MonoMap:
    if alpha == 1.0 and beta == 1.0:
        return S
    if isinstance(S, LinearMap):
        # x*/beta = (M alpha x + m)/beta
        return LinearMap(S.M * alpha / beta, S.offset / beta)
    return DeformedMap(S, alpha, beta)


def deform(A: LPositiveSet, alpha: float, beta: float) -> LPositiveSet:
    """Image of A under (x, x*) -> (x/alpha, x*/beta)."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    space = A.space
    if not space.is_product:
        raise ValueError("deformation needs a product space")
    n = space.n
    D = np.concatenate([np.full(n, 1.0 / alpha), np.full(n, 1.0 / beta)])
    if isinstance(A, FiniteCloud):
        return FiniteCloud(space, A.points * D)
    if isinstance(A, OperatorGraph):
        return OperatorGraph(space, A.M * alpha / beta, A.offset / beta)
    if isinstance(A, LinearSubspace):
        return LinearSubspace(space, D[:, None] * A.basis, D * A.origin)
    if isinstance(A, GraphSet):
        return GraphSet(space, DeformedMap(A.map, alpha, beta))
    raise TypeError(f"cannot deform a {A.kind}")


@dataclass
class InfConvValue:
    point: np.ndarray
    value: float
    argmin: Optional[np.ndarray]
    exact: bool

    def to_dict(self) -> dict:
        return {"point": self.point.tolist(), "value": self.value, "exact": self.exact,
                "argmin": None if self.argmin is None else self.argmin.tolist()}


def _partial_infconv(f: ConvexFn, g: ConvexFn, x, xstar, block: int) -> InfConvValue:
    n = f.dim // 2
    if f.dim != g.dim or f.dim % 2:
        raise ValueError("f and g must live on the same E x E*")
    x, xstar = as_vector(x, n), as_vector(xstar, n)
    p = np.concatenate([x, xstar])
    Z, I = np.zeros((n, n)), np.eye(n)
    if block == 2:
        # xi* -> f(x, x* - xi*) + g(x, xi*)
        Af, sf = np.vstack([Z, -I]), p
        Ag, sg = np.vstack([Z, I]), np.concatenate([x, np.zeros(n)])
    else:
        # xi -> f(x - xi, x*) + g(xi, x*)
        Af, sf = np.vstack([-I, Z]), p
        Ag, sg = np.vstack([I, Z]), np.concatenate([np.zeros(n), xstar])
    if isinstance(f, Quadratic) and isinstance(g, Quadratic):
        hf, hg = f.compose_affine(Af, sf), g.compose_affine(Ag, sg)
        if not (isinstance(hf, Quadratic) and isinstance(hg, Quadratic)):
            return InfConvValue(p, INF, None, True)
        h = hf.add(hg)
        if not isinstance(h, Quadratic):
            return InfConvValue(p, INF, None, True)
        value, xi = h.minimize()
        return InfConvValue(p, value, xi, True)
    obj = lambda xi: f.evaluate(Af @ xi + sf) + g.evaluate(Ag @ xi + sg)
    value, xi = convex_minimize(obj, n, center=np.zeros(n), radius=10.0 * (1.0 + np.max(np.abs(p))))
    return InfConvValue(p, value, xi if math.isfinite(value) else None, False)


def domain_infconv(f: ConvexFn, g: ConvexFn, x, xstar, budget: Budget = DEFAULT_BUDGET) -> InfConvValue:
    """h(x, x*) = inf_{xi*} [f(x, x* - xi*) + g(x, xi*)]."""
    return _partial_infconv(f, g, x, xstar, block=2)


def range_infconv(f: ConvexFn, g: ConvexFn, x, xstar, budget: Budget = DEFAULT_BUDGET) -> InfConvValue:
    """h(x, x*) = inf_{xi} [f(x - xi, x*) + g(xi, x*)]."""
    return _partial_infconv(f, g, x, xstar, block=1)


def _min_sum_over_shift(F: ConvexFn, G: ConvexFn, AF, sF, AG, sG, n: int, radius: float) -> float:
    """min over u in R^n of F(AF u + sF) + G(AG u + sG), exploiting quadratic pieces."""
    if isinstance(F, Quadratic) and isinstance(G, Quadratic):
        hF, hG = F.compose_affine(AF, sF), G.compose_affine(AG, sG)
        if not (isinstance(hF, Quadratic) and isinstance(hG, Quadratic)):
            return INF
        h = hF.add(hG)
        if not isinstance(h, Quadratic):
            return INF
        return h.minimize()[0]
    if isinstance(G, Quadratic) and not isinstance(F, Quadratic):
        F, G, AF, sF, AG, sG = G, F, AG, sG, AF, sF
    if isinstance(F, Quadratic):
        h = F.compose_affine(AF, sF)
        if not isinstance(h, Quadratic):
            return INF
        W = np.eye(n) if h.basis is None else h.basis
        u0 = h.origin
        obj = lambda t: h.evaluate(u0 + W @ t) + G.evaluate(AG @ (u0 + W @ t) + sG)
        return convex_minimize(obj, W.shape[1], radius=radius)[0]
    obj = lambda u: F.evaluate(AF @ u + sF) + G.evaluate(AG @ u + sG)
    return convex_minimize(obj, n, radius=radius)[0]


@dataclass
class SumCheckRecord:
    probe: np.ndarray
    h_circled: float
    q_value: float
    coincidence: bool
    direct: bool

    @property
    def agree(self) -> bool:
        return self.coincidence == self.direct

    def to_dict(self) -> dict:
        return {"probe": self.probe.tolist(), "h_circled": self.h_circled, "q": self.q_value,
                "coincidence": self.coincidence, "direct": self.direct, "agree": self.agree}


@dataclass
class SumCheckReport:
    records: list[SumCheckRecord]
    constraint: str = "not-applicable"

    @property
    def all_agree(self) -> bool:
        return all(r.agree for r in self.records)

    def to_dict(self) -> dict:
        return {"all_agree": self.all_agree, "constraint": self.constraint,
                "records": [r.to_dict() for r in self.records]}


def sum_circled(S: MonoMap, T: MonoMap, y, ystar) -> float:
    """h^(circled *)(y, y*) = min_u [phi_S^(c*)(y, y* - u) + phi_T^(c*)(y, u)] for the
    domain inf-convolution h of phi_S and phi_T."""
    n = S.n
    y, ystar = as_vector(y, n), as_vector(ystar, n)
    F, G = S.phi_circled(), T.phi_circled()
    Z, I = np.zeros((n, n)), np.eye(n)
    return _min_sum_over_shift(F, G, np.vstack([Z, -I]), np.concatenate([y, ystar]),
                               np.vstack([Z, I]), np.concatenate([y, np.zeros(n)]), n,
                               radius=10.0 * (1.0 + np.max(np.abs(ystar))))


def parallel_circled(S: MonoMap, T: MonoMap, y, ystar) -> float:
    """h^(circled *)(y, y*) = min_z [phi_S^*(y*, y - z) + phi_T^*(y*, z)] for the
    range inf-convolution h of phi_S and phi_T."""
    n = S.n
    y, ystar = as_vector(y, n), as_vector(ystar, n)
    F, G = S.phi_circled(), T.phi_circled()
    Z, I = np.zeros((n, n)), np.eye(n)
    # phi^*(a*, a) = phi^(c*)(a, a*)
    return _min_sum_over_shift(F, G, np.vstack([-I, Z]), np.concatenate([y, ystar]),
                               np.vstack([I, Z]), np.concatenate([np.zeros(n), ystar]), n,
                               radius=10.0 * (1.0 + np.max(np.abs(y))))


def _phi_fn(S: MonoMap) -> ConvexFn:
    """phi_S, as a quadratic when the graph is a subspace."""
    A = S.graph_set()
    return phi_quadratic(A) if isinstance(A, LinearSubspace) else FitzpatrickFn(A)


def domain_constraint(S: MonoMap, T: MonoMap) -> str:
    """Which domain condition of the sum theorem is verified.

    "interior" when one domain is all of R^n, so it meets the interior of the
    other; "unverified" otherwise (the closed-span condition is not decidable
    from samples, and the check proceeds anyway).
    """
    return "interior" if S.full_domain or T.full_domain else "unverified"


def sum_identity_check(S: MonoMap, T: MonoMap, probes, tol: float = 1e-6,
                       budget: Budget = DEFAULT_BUDGET, route: str = "conjugate",
                       grid: Optional[np.ndarray] = None) -> SumCheckReport:
    """Compare {h^(c*) = q_L} with direct membership in G(S + T) at each probe.

    route="conjugate" evaluates h^(c*) through the circled conjugates of the
    Fitzpatrick functions; route="oracle" takes the grid Legendre transform of
    h itself (a lower bound, so only off-graph decisions need resolution).
    """
    n = S.n
    ST = SumMap(S, T)
    f = g = None
    if route == "oracle":
        if grid is None:
            raise ValueError("oracle route needs a grid of E x E*")
        f, g = _phi_fn(S), _phi_fn(T)
        pts = np.atleast_2d(grid)
        hvals = np.array([domain_infconv(f, g, p[:n], p[n:]).value for p in pts])
    records = []
    for pr in np.atleast_2d(probes):
        y, ys = pr[:n], pr[n:]
        q = float(y @ ys)
        if route == "conjugate":
            hc = sum_circled(S, T, y, ys)
        else:
            ok = np.isfinite(hvals)
            # h^(c*)(y, y*) = h^*(y*, y)
            hc = float(np.max(pts[ok] @ np.concatenate([ys, y]) - hvals[ok]))
        coin = math.isfinite(hc) and abs(hc - q) <= tol * (1.0 + abs(q))
        records.append(SumCheckRecord(np.asarray(pr, float), hc, q, coin, ST.contains(y, ys, tol)))
    return SumCheckReport(records, domain_constraint(S, T))


def parallel_sum_check(S: MonoMap, T: MonoMap, probes, tol: float = 1e-6,
                       reference: Optional[MonoMap] = None) -> SumCheckReport:
    """Compare {h^(c*) = q_L} for the range inf-convolution with membership in
    G(S || T) (or in the graph of `reference` when given)."""
    n = S.n
    target = reference if reference is not None else parallel_sum(S, T)
    records = []
    for pr in np.atleast_2d(probes):
        y, ys = pr[:n], pr[n:]
        q = float(y @ ys)
        hc = parallel_circled(S, T, y, ys)
        coin = math.isfinite(hc) and abs(hc - q) <= tol * (1.0 + abs(q))
        records.append(SumCheckRecord(np.asarray(pr, float), hc, q, coin, target.contains(y, ys, tol)))
    return SumCheckReport(records)


def resolvent_gap_oracle(S: MonoMap, w, wstar) -> tuple[float, np.ndarray]:
    """Euclidean gap through r_L((s, s*) - (w, w*)) = 1/2 |(s - w) + (s* - w*)|^2.

    The zero-gap point solves s + s* = w + w*, i.e. s = J_S(w + w*). Finite
    graphs fall back to the exact minimum.
    """
    w, wstar = as_vector(w, S.n), as_vector(wstar, S.n)
    if isinstance(S, FiniteGraph):
        D = (S.X - w) + (S.Xs - wstar)
        vals = 0.5 * np.sum(D * D, axis=1)
        i = int(np.argmin(vals))
        return float(vals[i]), np.concatenate([S.X[i], S.Xs[i]])
    z = w + wstar
    s = S.resolvent(z)
    ss = z - s
    d = (s - w) + (ss - wstar)
    return 0.5 * float(d @ d), np.concatenate([s, ss])


# ---------------------------------------------------------------------------
# tail and head operators on finite-support sequences


def _check_support(x, N: Optional[int]) -> np.ndarray:
    x = as_vector(x)
    if N is not None:
        if x.size > N and np.any(x[N:] != 0):
            raise ValueError(f"support exceeds truncation N = {N}")
        x = x[:N] if x.size >= N else np.concatenate([x, np.zeros(N - x.size)])
    return x


def tail(x, N: Optional[int] = None) -> np.ndarray:
    """(Tx)_n = sum_{k >= n} x_k."""
    x = _check_support(x, N)
    return np.cumsum(x[::-1])[::-1]


def head(x, N: Optional[int] = None) -> np.ndarray:
    """(Hx)_n = sum_{k <= n} x_k."""
    return np.cumsum(_check_support(x, N))


def combo(lam: float, mu: float, x, N: Optional[int] = None) -> np.ndarray:
    """lam * Tx + mu * Hx."""
    x = _check_support(x, N)
    return lam * tail(x) + mu * head(x)


def tail_probe_value(x, t: float = 1.0) -> float:
    """r_L((x, Tx) - (0, t e*)) in ell1 x ell_inf for finite-support x."""
    x = as_vector(x)
    Tx = tail(x)
    # the tail of Tx - t e* is the constant -t beyond the support
    sup = max(float(np.max(np.abs(Tx - t))) if x.size else 0.0, abs(t))
    return 0.5 * float(np.sum(np.abs(x))) ** 2 + 0.5 * sup ** 2 + float(x @ (Tx - t))


def pairing_exact(x, lam: float = 1.0, mu: float = 0.0) -> float:
    """<x, (lam T + mu H) x> in exact rational arithmetic on the float inputs,
    rounded once at the end."""
    xs = [Fraction(float(v)) for v in as_vector(x)]
    lam, mu = Fraction(float(lam)), Fraction(float(mu))
    total = sum(xs, Fraction(0))
    acc, out = Fraction(0), Fraction(0)
    for v in xs:
        # head sum through index n, tail sum from index n
        acc += v
        out += v * (lam * (total - acc + v) + mu * acc)
    return float(out)
