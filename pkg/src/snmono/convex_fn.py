"""Closed-form convex functions, conjugation, touching tests and the
coincidence-projection iteration.

Families: quadratics on affine subspaces, indicators (subspace, box,
polytope), norm powers a*|x|^p, finite sums, separable pairs k(x) + k*(x*)
and grid functions. Each member is convex and lower semicontinuous by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog, minimize, minimize_scalar

from ._optim import (DEFAULT_BUDGET, INF, Budget, as_vector, lattice, multistart_minimize,
                     null_basis, orth_basis, quadratic_inf, quadratic_sup, sym)
from .sn_core import NormKind, SnSpace

MEMBER_TOL = 1e-10


class NoClosedForm(NotImplementedError):
    """The family has no closed-form conjugate; use legendre_oracle instead."""


class NotInPCq(ValueError):
    """A sample showed f < q_L, so f is not in PC_q(B)."""


class InnerMinimizerFailed(RuntimeError):
    """The inner problem of the projection iteration missed its slack."""


class ConvexFn:
    """Base class: a proper convex lsc function on R^dim."""

    tag = "abstract"
    dim: int

    def __call__(self, x) -> float:
        return self.evaluate(x)

    def evaluate(self, x) -> float:
        raise NotImplementedError

    def conjugate(self, y) -> float:
        raise NoClosedForm(self.tag)

    def prox(self, v, t: float = 1.0) -> np.ndarray:
        """argmin_x f(x) + |x - v|^2 / (2t) in the euclidean metric."""
        return _numeric_prox(self, as_vector(v, self.dim), t)

    def has_exact_prox(self) -> bool:
        return False

    def in_domain(self, x) -> bool:
        return math.isfinite(self.evaluate(x))

    def to_dict(self) -> dict:
        raise NotImplementedError(f"{self.tag} is not serializable")

    def __add__(self, other: "ConvexFn") -> "ConvexFn":
        return SumOf([self, other])


# ---------------------------------------------------------------------------
# quadratics on affine subspaces


class Quadratic(ConvexFn):
    """1/2 x'Qx + b'x + c restricted to the affine set origin + span(basis).

    With basis=None the domain is all of R^dim. Q must be positive
    semidefinite on the domain directions.
    """

    tag = "quadratic"

    def __init__(self, Q, b=None, c: float = 0.0, origin=None, basis=None):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.dim = Q.shape[0]
        self.Q = sym(Q)
        self.b = np.zeros(self.dim) if b is None else as_vector(b, self.dim, "b")
        self.c = float(c)
        if basis is None:
            self.basis = None
            self.origin = np.zeros(self.dim)
        else:
            B = np.asarray(basis, dtype=float).reshape(self.dim, -1)
            self.basis = orth_basis(B)
            o = np.zeros(self.dim) if origin is None else as_vector(origin, self.dim, "origin")
            # canonical origin: the point of the affine set closest to 0
            self.origin = o - self.basis @ (self.basis.T @ o)
        W = self._W()
        Qr = W.T @ self.Q @ W
        if Qr.size and np.min(np.linalg.eigvalsh(sym(Qr))) < -1e-9 * max(1.0, np.max(np.abs(Qr))):
            raise ValueError("quadratic is not convex on its domain")

    def _W(self) -> np.ndarray:
        return np.eye(self.dim) if self.basis is None else self.basis

    def domain_residual(self, x) -> float:
        if self.basis is None:
            return 0.0
        d = x - self.origin
        return float(np.linalg.norm(d - self.basis @ (self.basis.T @ d)))

    def evaluate(self, x) -> float:
        x = as_vector(x, self.dim)
        if self.domain_residual(x) > MEMBER_TOL * (1.0 + np.linalg.norm(x)):
            return INF
        return 0.5 * float(x @ self.Q @ x) + float(self.b @ x) + self.c

    def reduced(self) -> tuple[np.ndarray, np.ndarray, float]:
        """(G, h, k) with f(origin + W z) = 1/2 z'Gz + h'z + k."""
        W, o = self._W(), self.origin
        G = W.T @ self.Q @ W
        h = W.T @ (self.Q @ o + self.b)
        k = 0.5 * float(o @ self.Q @ o) + float(self.b @ o) + self.c
        return G, h, k

    def minimize(self) -> tuple[float, Optional[np.ndarray]]:
        G, h, k = self.reduced()
        value, z = quadratic_inf(G, h, k)
        if z is None:
            return value, None
        return value, self.origin + self._W() @ z

    def conjugate(self, y) -> float:
        y = as_vector(y, self.dim)
        W, o = self._W(), self.origin
        G, h, k = self.reduced()
        value, _ = quadratic_sup(G, W.T @ y - h, float(y @ o) - k)
        return value

    def conjugate_fn(self) -> "Quadratic":
        """The conjugate as another member of the family."""
        W, o = self._W(), self.origin
        G, h, k = self.reduced()
        # f*(y) = sup_z [z'(W'y - h) - 1/2 z'Gz] + y'o - k
        w, U = np.linalg.eigh(G) if G.size else (np.zeros(0), np.zeros((0, 0)))
        scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
        pos = w > 1e-10 * scale
        Up, Un = U[:, pos], U[:, ~pos]
        Gp = Up @ np.diag(1.0 / w[pos]) @ Up.T if pos.any() else np.zeros_like(G)
        # finite iff Un'(W'y - h) = 0, an affine condition on y
        M = Un.T @ W.T
        Qy = W @ Gp @ W.T
        by = o - W @ Gp @ h
        cy = 0.5 * float(h @ Gp @ h) - k
        if M.shape[0] == 0:
            return Quadratic(Qy, by, cy)
        y0 = np.linalg.lstsq(M, Un.T @ h, rcond=None)[0]
        return Quadratic(Qy, by, cy, origin=y0, basis=null_basis(M))

    def compose_affine(self, A, shift) -> "Quadratic":
        """z -> f(A z + shift) as a quadratic on the preimage of the domain."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        shift = as_vector(shift, self.dim)
        m = A.shape[1]
        Q = A.T @ self.Q @ A
        b = A.T @ (self.Q @ shift + self.b)
        c = 0.5 * float(shift @ self.Q @ shift) + float(self.b @ shift) + self.c
        if self.basis is None:
            return Quadratic(Q, b, c)
        P = np.eye(self.dim) - self.basis @ self.basis.T
        M = P @ A
        rhs = P @ (self.origin - shift)
        z0, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        if np.linalg.norm(M @ z0 - rhs) > 1e-9 * (1.0 + np.linalg.norm(rhs)):
            return EmptyFn(m)
        return Quadratic(Q, b, c, origin=z0, basis=null_basis(M))

    def add(self, other: "Quadratic") -> "ConvexFn":
        """Sum of two quadratics; the domain is the intersection."""
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        Q, b, c = self.Q + other.Q, self.b + other.b, self.c + other.c
        if self.basis is None and other.basis is None:
            return Quadratic(Q, b, c)
        W1, W2 = self._W(), other._W()
        M = np.hstack([W1, -W2])
        rhs = other.origin - self.origin
        uv, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        if np.linalg.norm(M @ uv - rhs) > 1e-9 * (1.0 + np.linalg.norm(rhs)):
            return EmptyFn(self.dim)
        x0 = self.origin + W1 @ uv[:W1.shape[1]]
        N = null_basis(M)
        basis = W1 @ N[:W1.shape[1]]
        return Quadratic(Q, b, c, origin=x0, basis=basis if basis.shape[1] else np.zeros((self.dim, 0)))

    def prox(self, v, t: float = 1.0) -> np.ndarray:
        v = as_vector(v, self.dim)
        # minimize 1/2 z'(tG + I)z + z'(t h - W'(v - o)) over the domain
        W, o = self._W(), self.origin
        G, h, _ = self.reduced()
        H = t * G + np.eye(G.shape[0])
        z = np.linalg.solve(H, W.T @ (v - o) - t * h) if G.size else np.zeros(0)
        return o + W @ z

    def has_exact_prox(self) -> bool:
        return True

    def subgradient(self, x) -> np.ndarray:
        return self.Q @ as_vector(x, self.dim) + self.b

    def to_dict(self) -> dict:
        d = {"family": "quadratic", "Q": self.Q.tolist(), "b": self.b.tolist(), "c": self.c}
        if self.basis is not None:
            d["origin"] = self.origin.tolist()
            d["basis"] = self.basis.T.tolist()
        return d


class EmptyFn(ConvexFn):
    """The improper constant +inf; produced by empty domain intersections."""

    tag = "empty"

    def __init__(self, dim: int):
        self.dim = dim

    def evaluate(self, x) -> float:
        return INF

    def minimize(self):
        return INF, None

    def compose_affine(self, A, shift):
        return EmptyFn(np.atleast_2d(A).shape[1])

    def add(self, other):
        return self


# ---------------------------------------------------------------------------
# indicators


class Indicator(ConvexFn):
    """Indicator of a subspace (columns of `basis`), a box or a polytope Ax <= b."""

    tag = "indicator"

    def __init__(self, dim: int, *, basis=None, lo=None, hi=None, A_ub=None, b_ub=None):
        self.dim = dim
        self.kind = None
        if basis is not None:
            self.kind = "subspace"
            self.basis = orth_basis(np.asarray(basis, dtype=float).reshape(dim, -1))
        elif lo is not None or hi is not None:
            self.kind = "box"
            self.lo = np.full(dim, -INF) if lo is None else as_vector(lo, dim)
            self.hi = np.full(dim, INF) if hi is None else as_vector(hi, dim)
            if np.any(self.lo > self.hi):
                raise ValueError("empty box")
        elif A_ub is not None:
            self.kind = "polytope"
            self.A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
            self.b_ub = as_vector(b_ub, self.A_ub.shape[0])
            res = linprog(np.zeros(dim), A_ub=self.A_ub, b_ub=self.b_ub,
                          bounds=[(None, None)] * dim, method="highs")
            if res.status == 2:
                raise ValueError("empty polytope")
        else:
            raise ValueError("indicator needs a subspace, box or polytope")

    def contains(self, x, tol: float = MEMBER_TOL) -> bool:
        x = as_vector(x, self.dim)
        scale = 1.0 + float(np.linalg.norm(x))
        if self.kind == "subspace":
            return float(np.linalg.norm(x - self.basis @ (self.basis.T @ x))) <= tol * scale
        if self.kind == "box":
            return bool(np.all(x >= self.lo - tol * scale) and np.all(x <= self.hi + tol * scale))
        return bool(np.all(self.A_ub @ x <= self.b_ub + tol * scale))

    def evaluate(self, x) -> float:
        return 0.0 if self.contains(x) else INF

    def conjugate(self, y) -> float:
        y = as_vector(y, self.dim)
        if self.kind == "subspace":
            r = self.basis.T @ y
            return 0.0 if np.linalg.norm(r) <= 1e-9 * (1.0 + np.linalg.norm(y)) else INF
        if self.kind == "box":
            with np.errstate(invalid="ignore"):
                terms = np.where(y > 0, y * self.hi, np.where(y < 0, y * self.lo, 0.0))
            return float(np.sum(terms))
        res = linprog(-y, A_ub=self.A_ub, b_ub=self.b_ub, bounds=[(None, None)] * self.dim,
                      method="highs")
        if res.status == 3:
            return INF
        return float(-res.fun)

    def prox(self, v, t: float = 1.0) -> np.ndarray:
        v = as_vector(v, self.dim)
        if self.kind == "subspace":
            return self.basis @ (self.basis.T @ v)
        if self.kind == "box":
            return np.clip(v, self.lo, self.hi)
        res = minimize(lambda x: 0.5 * float((x - v) @ (x - v)), v, jac=lambda x: x - v,
                       constraints=[{"type": "ineq", "fun": lambda x: self.b_ub - self.A_ub @ x,
                                     "jac": lambda x: -self.A_ub}],
                       method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
        return res.x

    def has_exact_prox(self) -> bool:
        return self.kind in ("subspace", "box")

    def as_quadratic(self) -> Quadratic:
        if self.kind != "subspace":
            raise NoClosedForm("only subspace indicators are quadratics")
        return Quadratic(np.zeros((self.dim, self.dim)), basis=self.basis)

    def to_dict(self) -> dict:
        if self.kind == "subspace":
            return {"family": "indicator", "dim": self.dim, "subspace": self.basis.T.tolist()}
        if self.kind == "box":
            return {"family": "indicator", "dim": self.dim, "lo": _jsonable(self.lo),
                    "hi": _jsonable(self.hi)}
        return {"family": "indicator", "dim": self.dim, "A_ub": self.A_ub.tolist(),
                "b_ub": self.b_ub.tolist()}


def _jsonable(v: np.ndarray) -> list:
    return [x if math.isfinite(x) else ("inf" if x > 0 else "-inf") for x in map(float, v)]


# ---------------------------------------------------------------------------
# norm powers


class NormPower(ConvexFn):
    """alpha * |x|^p for p in {1, 2} under a coordinate norm."""

    tag = "norm"

    def __init__(self, dim: int, alpha: float = 1.0, p: int = 1, norm: NormKind | str = "euclidean"):
        if p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.dim, self.alpha, self.p = dim, float(alpha), p
        self.norm = NormKind.parse(norm)

    def evaluate(self, x) -> float:
        return self.alpha * self.norm.norm(as_vector(x, self.dim)) ** self.p

    def conjugate(self, y) -> float:
        d = self.norm.dual_norm(as_vector(y, self.dim))
        if self.p == 1:
            return 0.0 if d <= self.alpha * (1 + 1e-12) else INF
        return d * d / (4.0 * self.alpha)

    def prox(self, v, t: float = 1.0) -> np.ndarray:
        v = as_vector(v, self.dim)
        tag = self.norm.tag
        if self.p == 2 and tag == "euclidean":
            return v / (1.0 + 2.0 * t * self.alpha)
        if self.p == 1 and tag == "euclidean":
            nv = float(np.linalg.norm(v))
            if nv <= t * self.alpha:
                return np.zeros_like(v)
            return v * (1.0 - t * self.alpha / nv)
        if self.p == 1 and tag == "ell1":
            return np.sign(v) * np.maximum(np.abs(v) - t * self.alpha, 0.0)
        if self.p == 1 and tag == "ellinf":
            # Moreau: v - t * proj onto ell1 ball of radius alpha of v/t
            return v - t * _project_l1_ball(v / t, self.alpha)
        return _numeric_prox(self, v, t)

    def has_exact_prox(self) -> bool:
        return self.p == 1 or self.norm.tag == "euclidean"

    def subgradient(self, x) -> np.ndarray:
        x = as_vector(x, self.dim)
        j = self.norm.duality_map(x)
        nx = self.norm.norm(x)
        if nx == 0:
            return np.zeros_like(x)
        if self.p == 1:
            return self.alpha * j / nx
        return 2.0 * self.alpha * j

    def to_dict(self) -> dict:
        return {"family": "norm", "dim": self.dim, "alpha": self.alpha, "p": self.p,
                "norm": str(self.norm)}


def _project_l1_ball(v: np.ndarray, radius: float) -> np.ndarray:
    if np.sum(np.abs(v)) <= radius:
        return v.copy()
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    k = np.nonzero(u * np.arange(1, v.size + 1) > (css - radius))[0][-1]
    theta = (css[k] - radius) / (k + 1.0)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


# ---------------------------------------------------------------------------
# sums, separable pairs and grid functions


class SumOf(ConvexFn):
    """Finite sum of family members."""

    tag = "sum"

    def __init__(self, terms: Sequence[ConvexFn]):
        flat: list[ConvexFn] = []
        for t in terms:
            flat.extend(t.terms if isinstance(t, SumOf) else [t])
        if not flat:
            raise ValueError("empty sum")
        dims = {t.dim for t in flat}
        if len(dims) != 1:
            raise ValueError(f"dimension mismatch in sum: {sorted(dims)}")
        self.terms = flat
        self.dim = flat[0].dim

    def evaluate(self, x) -> float:
        total = 0.0
        for t in self.terms:
            v = t.evaluate(x)
            if v == INF:
                return INF
            total += v
        return total

    def conjugate(self, y) -> float:
        if len(self.terms) == 1:
            return self.terms[0].conjugate(y)
        quads = [t for t in self.terms if isinstance(t, Quadratic)]
        if len(quads) == len(self.terms):
            f = quads[0]
            for g in quads[1:]:
                f = f.add(g)
            return f.conjugate(y) if isinstance(f, Quadratic) else INF
        raise NoClosedForm("sum")

    def prox(self, v, t: float = 1.0) -> np.ndarray:
        v = as_vector(v, self.dim)
        if len(self.terms) == 1:
            return self.terms[0].prox(v, t)
        # Douglas-Rachford on (first term) + (rest)
        f = self.terms[0]
        g = SumOf(self.terms[1:]) if len(self.terms) > 2 else self.terms[1]
        # split the quadratic penalty evenly: min f + g + |x - v|^2/(2t)
        s = 2.0 * t

        def pf(u):
            # argmin f(x) + |x - v|^2/(2s) + |x - u|^2/2
            w = (v / s + u) / (1.0 / s + 1.0)
            return f.prox(w, 1.0 / (1.0 / s + 1.0))

        def pg(u):
            w = (v / s + u) / (1.0 / s + 1.0)
            return g.prox(w, 1.0 / (1.0 / s + 1.0))

        z = v.copy()
        x = pf(z)
        for _ in range(20000):
            x = pf(z)
            y = pg(2 * x - z)
            step = y - x
            z = z + step
            if np.linalg.norm(step) <= 1e-14 * (1.0 + np.linalg.norm(x)):
                break
        return pf(z)

    def has_exact_prox(self) -> bool:
        return all(t.has_exact_prox() for t in self.terms)

    def to_dict(self) -> dict:
        return {"family": "sum", "terms": [t.to_dict() for t in self.terms]}


class SeparablePair(ConvexFn):
    """f(x, x*) = k(x) + k*(x*) on R^n x R^n, for k with a closed-form conjugate."""

    tag = "separable-pair"

    def __init__(self, k: ConvexFn):
        self.k = k
        self.n = k.dim
        self.dim = 2 * k.dim

    def evaluate(self, x) -> float:
        x = as_vector(x, self.dim)
        a = self.k.evaluate(x[:self.n])
        if a == INF:
            return INF
        b = self.k.conjugate(x[self.n:])
        return a + b

    def conjugate(self, y) -> float:
        # (k + k*)*(y*, y**) = k*(y*) + k**(y**) = k*(y*) + k(y**)
        y = as_vector(y, self.dim)
        a = self.k.conjugate(y[:self.n])
        if a == INF:
            return INF
        return a + self.k.evaluate(y[self.n:])

    def to_dict(self) -> dict:
        return {"family": "separable-pair", "k": self.k.to_dict()}


class GridFunction(ConvexFn):
    """Values on a finite point set; +inf elsewhere."""

    tag = "grid"

    def __init__(self, points, values):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.values = np.asarray(values, dtype=float).reshape(-1)
        if self.points.shape[0] != self.values.shape[0]:
            raise ValueError("points/values length mismatch")
        if self.points.shape[0] == 0:
            raise ValueError("empty grid")
        self.dim = self.points.shape[1]

    def evaluate(self, x) -> float:
        x = as_vector(x, self.dim)
        d = np.max(np.abs(self.points - x), axis=1)
        i = int(np.argmin(d))
        return float(self.values[i]) if d[i] <= 1e-12 * (1 + np.max(np.abs(x))) else INF

    def conjugate(self, y) -> float:
        return preconjugate(self, y)

    def to_dict(self) -> dict:
        return {"family": "grid", "points": self.points.tolist(), "values": self.values.tolist()}


class CallableFn(ConvexFn):
    """Wraps a user callable known to be convex (oracle use only)."""

    tag = "callable"

    def __init__(self, dim: int, fun: Callable[[np.ndarray], float],
                 conj: Optional[Callable[[np.ndarray], float]] = None):
        self.dim, self._fun, self._conj = dim, fun, conj

    def evaluate(self, x) -> float:
        return float(self._fun(as_vector(x, self.dim)))

    def conjugate(self, y) -> float:
        if self._conj is None:
            raise NoClosedForm("callable")
        return float(self._conj(as_vector(y, self.dim)))


def from_dict(data: dict) -> ConvexFn:
    """Rebuild a family member from its JSON tagged-union form."""
    fam = data.get("family")
    if fam == "quadratic":
        basis = data.get("basis")
        Q = np.asarray(data["Q"], dtype=float)
        return Quadratic(Q, data.get("b"), data.get("c", 0.0), origin=data.get("origin"),
                         basis=None if basis is None else np.asarray(basis, dtype=float).reshape(-1, Q.shape[0]).T)
    if fam == "indicator":
        dim = int(data["dim"])
        if "subspace" in data:
            return Indicator(dim, basis=np.asarray(data["subspace"], dtype=float).reshape(-1, dim).T)
        if "lo" in data or "hi" in data:
            conv = lambda v: None if v is None else np.array([float(x) for x in v])
            return Indicator(dim, lo=conv(data.get("lo")), hi=conv(data.get("hi")))
        return Indicator(dim, A_ub=data["A_ub"], b_ub=data["b_ub"])
    if fam == "norm":
        return NormPower(int(data["dim"]), data.get("alpha", 1.0), int(data.get("p", 1)),
                         data.get("norm", "euclidean"))
    if fam == "sum":
        return SumOf([from_dict(t) for t in data["terms"]])
    if fam == "separable-pair":
        return SeparablePair(from_dict(data["k"]))
    if fam == "grid":
        return GridFunction(data["points"], data["values"])
    raise ValueError(f"unknown convex function family {fam!r}")


# ---------------------------------------------------------------------------
# numerics shared by the operations


def _numeric_prox(f: ConvexFn, v: np.ndarray, t: float) -> np.ndarray:
    obj = lambda x: f.evaluate(x) + float((x - v) @ (x - v)) / (2 * t)
    return convex_minimize(obj, v.size, center=v, radius=4.0 * (1.0 + np.max(np.abs(v))))[1]


def convex_minimize(fun: Callable[[np.ndarray], float], dim: int, center=None,
                    radius: float = 10.0, tol: float = 1e-12, starts=None) -> tuple[float, np.ndarray]:
    """Minimize a convex, possibly nonsmooth and extended-valued function.

    One dimension: coarse scan to bracket the finite region, then bounded
    Brent refinement. Higher dimensions: Powell from the best scanned points
    followed by a Nelder-Mead polish.
    """
    center = np.zeros(dim) if center is None else as_vector(center, dim)
    if dim == 0:
        return float(fun(np.zeros(0))), np.zeros(0)
    if dim == 1:
        ts = center[0] + np.linspace(-radius, radius, 4001)
        vals = np.array([_finite_or_inf(fun, np.array([t])) for t in ts])
        if not np.isfinite(vals).any():
            return INF, center.copy()
        i = int(np.argmin(vals))
        lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, ts.size - 1)]
        best_t, best_v = ts[i], vals[i]
        res = minimize_scalar(lambda t: _finite_or_big(fun, np.array([t])), bounds=(lo, hi),
                              method="bounded", options={"xatol": tol, "maxiter": 500})
        if res.fun < best_v:
            best_t, best_v = float(res.x), float(res.fun)
        return float(best_v), np.array([best_t])
    pts = [center.copy()]
    if starts is not None:
        pts += [as_vector(s, dim) for s in starts]
    if dim <= 2:
        g = lattice([(c - radius, c + radius, radius / 20) for c in center])
        vals = np.array([_finite_or_inf(fun, p) for p in g])
        order = np.argsort(vals)[:3]
        pts += [g[i] for i in order if np.isfinite(vals[i])]
    f = lambda x: _finite_or_big(fun, x)
    runs = multistart_minimize(f, pts, method="Powell", max_iter=20000, polish=True)
    best = min(runs, key=lambda r: r.fun)
    val = _finite_or_inf(fun, best.x)
    return val, best.x


def _finite_or_inf(fun, x) -> float:
    with np.errstate(all="ignore"):
        try:
            v = float(fun(x))
        except (OverflowError, FloatingPointError, ValueError):
            return INF
    return v if not math.isnan(v) else INF


def _finite_or_big(fun, x) -> float:
    v = _finite_or_inf(fun, x)
    return v if math.isfinite(v) else 1e300


# ---------------------------------------------------------------------------
# operations


def evaluate(f: ConvexFn, x) -> float:
    return f.evaluate(x)


def conjugate(f: ConvexFn, xstar, grid: Optional[np.ndarray] = None) -> float:
    """Closed-form conjugate; falls back to the grid oracle when `grid` is given."""
    try:
        return f.conjugate(xstar)
    except NoClosedForm:
        if grid is None:
            raise
        return legendre_oracle(f, xstar, grid)


def legendre_oracle(f: ConvexFn, xstar, grid) -> float:
    """max over grid points x of <x, x*> - f(x): a lower bound for f*(x*)."""
    pts = np.atleast_2d(np.asarray(grid, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("empty grid")
    if pts.shape[1] != f.dim and f.dim == 1:
        pts = pts.reshape(-1, 1)
    xstar = as_vector(xstar, f.dim)
    vals = np.array([f.evaluate(p) for p in pts])
    ok = np.isfinite(vals)
    if not ok.any():
        raise ValueError("f is +inf on the whole grid")
    return float(np.max(pts[ok] @ xstar - vals[ok]))


def preconjugate(g: ConvexFn | GridFunction, x) -> float:
    """sup over the grid of <x, x*> - g(x*) for a grid function g on B*."""
    if not isinstance(g, GridFunction):
        raise TypeError("preconjugate needs a GridFunction")
    x = as_vector(x, g.dim)
    ok = np.isfinite(g.values)
    if not ok.any():
        raise ValueError("empty grid")
    return float(np.max(g.points[ok] @ x - g.values[ok]))


def circled_conjugate(space: SnSpace, f: ConvexFn, b, grid=None) -> float:
    """f^(circled *)(b) = f*(Lb)."""
    return conjugate(f, space.L @ space.point(b), grid)


def in_subdifferential(f: ConvexFn, x, xstar, tol: float = 1e-8) -> bool:
    """Fenchel-Young equality test for x* in the subdifferential of f at x."""
    x, xstar = as_vector(x, f.dim), as_vector(xstar, f.dim)
    fx = f.evaluate(x)
    if not math.isfinite(fx):
        return False
    fc = f.conjugate(xstar)
    if not math.isfinite(fc):
        return False
    return fx + fc - float(x @ xstar) <= tol * (1.0 + abs(fx) + abs(fc))


@dataclass
class TouchingRecord:
    probe: np.ndarray
    value: float
    minimizer: np.ndarray
    lower_bound: Optional[float]

    def to_dict(self) -> dict:
        return {"probe": self.probe.tolist(), "value": self.value,
                "minimizer": self.minimizer.tolist(), "lower_bound": self.lower_bound}


@dataclass
class TouchingCertificate:
    records: list[TouchingRecord]
    verdict: str
    witness: Optional[np.ndarray] = None
    lower_bound: Optional[float] = None

    @property
    def touching(self) -> bool:
        return self.verdict == "touching-on-grid"

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "records": [r.to_dict() for r in self.records],
                "witness": None if self.witness is None else self.witness.tolist(),
                "lower_bound": self.lower_bound}


def shifted_objective(space: SnSpace, f: ConvexFn, c: np.ndarray) -> Callable[[np.ndarray], float]:
    """d -> (f - q_L)(d) + r_L(d - c), written as a convex function of d."""
    Lc = space.L @ c
    qc = 0.5 * float(c @ Lc)
    kind = space.norm_kind

    def obj(d):
        fd = f.evaluate(d)
        if fd == INF:
            return INF
        return fd + 0.5 * kind.norm(d - c) ** 2 - float(d @ Lc) + qc
    return obj


def inner_minimize(space: SnSpace, f: ConvexFn, c, budget: Budget = DEFAULT_BUDGET
                   ) -> tuple[float, np.ndarray, Optional[float]]:
    """inf_d [(f - q_L)(d) + r_L(d - c)]; returns (value, minimizer, lower).

    `lower` is a certified lower bound of the infimum, or None.

    With a euclidean norm the minimizer is prox_f(c + Lc), exact whenever f
    has an exact prox. A function exposing `touching_gap` supplies its own
    solver (used for q_L plus the indicator of an L-positive set).
    """
    c = space.point(c)
    hook = getattr(f, "touching_gap", None)
    if hook is not None:
        return hook(c, budget)
    obj = shifted_objective(space, f, c)
    if space.is_euclidean:
        d = f.prox(c + space.L @ c, 1.0)
        value = obj(d)
        return value, d, (value if f.has_exact_prox() else None)
    radius = 4.0 * (1.0 + space.norm(c))
    value, d = convex_minimize(obj, space.dim, center=c, radius=radius)
    return value, d, None


def _check_pcq(space: SnSpace, f: ConvexFn, pts: Sequence[np.ndarray], tol: float):
    for p in pts:
        v = f.evaluate(p)
        if v < space.q(p) - tol * (1.0 + abs(v)):
            raise NotInPCq(f"f < q_L at {np.asarray(p).tolist()}")


def is_touching(space: SnSpace, f: ConvexFn, test_points, tol: Optional[float] = None,
                budget: Budget = DEFAULT_BUDGET) -> TouchingCertificate:
    """Grid test of inf_d[(f - q_L)(d) + r_L(d - c)] <= tol at every probe c."""
    if tol is None:
        tol = 1e-8 if space.is_euclidean else 1e-6
    records = []
    probes = [space.point(c) for c in np.atleast_2d(test_points)]
    _check_pcq(space, f, probes, tol)
    for c in probes:
        value, d, lower = inner_minimize(space, f, c, budget)
        _check_pcq(space, f, [d], tol)
        records.append(TouchingRecord(c, float(value), np.asarray(d), lower))
    bad = [r for r in records if r.value > tol]
    if not bad:
        return TouchingCertificate(records, "touching-on-grid")
    worst = max(bad, key=lambda r: r.value)
    certified = [r for r in bad if r.lower_bound is not None and r.lower_bound > tol]
    if certified:
        w = max(certified, key=lambda r: r.lower_bound)
        return TouchingCertificate(records, "refuted", w.probe, w.lower_bound)
    return TouchingCertificate(records, "no-gap-found-within-budget", worst.probe, None)


@dataclass
class DualCheck:
    verdict: str
    witness: Optional[np.ndarray]
    margins: list[float]

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "margins": self.margins,
                "witness": None if self.witness is None else self.witness.tolist()}


def touching_dual_check(space: SnSpace, f: ConvexFn, dual_samples, tol: float = 1e-8,
                        budget: Budget = DEFAULT_BUDGET) -> DualCheck:
    """Check f*(b*) >= s_L(b*) - tol at every dual sample."""
    from .sn_core import s_L
    margins = []
    for bs in np.atleast_2d(dual_samples):
        fs = f.conjugate(bs)
        sl = s_L(space, bs, budget)
        if sl == INF:
            m = 0.0 if fs == INF else -INF
        elif fs == INF:
            m = INF
        else:
            m = fs - sl
        margins.append(m)
        if m < -tol:
            return DualCheck("refuted", np.asarray(bs, dtype=float), margins)
    return DualCheck("consistent-with-touching", None, margins)


@dataclass
class ProjectionTrace:
    iterates: list[np.ndarray]
    residuals: list[float]
    slacks: list[float]
    steps: list[float]
    N_c: float
    distance: float
    coincidence_residual: float
    delta: float

    def step_bounds_hold(self, rtol: float = 1e-12) -> bool:
        """|c_{n+1} - c_n| <= 3 delta^n for every recorded n >= 1."""
        return all(s <= 3 * self.delta ** (n + 1) + rtol for n, s in enumerate(self.steps[1:]))

    def to_dict(self) -> dict:
        return {"iterates": [c.tolist() for c in self.iterates], "residuals": self.residuals,
                "slacks": self.slacks, "steps": self.steps, "N_c": self.N_c,
                "distance": self.distance, "coincidence_residual": self.coincidence_residual,
                "delta": self.delta}


def project_to_coincidence(space: SnSpace, h: ConvexFn, c, delta: float = 0.1,
                           budget: Budget = DEFAULT_BUDGET, max_steps: int = 200
                           ) -> tuple[np.ndarray, ProjectionTrace]:
    """Iterate c_n = argmin_d[(h - q_L)(d) + r_L(d - c_{n-1})] towards {h = q_L}.

    Each step must meet the slack delta^(2n). N_c is the radius obtained from
    the bounded-sublevel argument with the first minimizer as anchor,
    N_c = |c_1 - c| + 3.
    """
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must lie in ]0, 1/2[")
    c = space.point(c)
    iterates = [c.copy()]
    residuals, slacks, steps = [], [], []
    prev = c
    for n in range(1, max_steps + 1):
        value, d, _ = inner_minimize(space, h, prev, budget)
        target = delta ** (2 * n)
        if value > target + 1e-15:
            raise InnerMinimizerFailed(
                f"step {n}: inner value {value:.3e} exceeds slack {target:.3e}")
        resid = h.evaluate(d) - space.q(d)
        residuals.append(float(resid))
        slacks.append(float(value))
        steps.append(space.norm(d - prev))
        iterates.append(np.asarray(d, dtype=float))
        prev = d
        if delta ** (2 * (n + 1)) < 1e-14 or (n > 1 and steps[-1] < 1e-10):
            break
    a = iterates[-1]
    N_c = space.norm(iterates[1] - c) + 3.0
    trace = ProjectionTrace(iterates, residuals, slacks, steps, N_c, space.norm(a - c),
                            float(abs(h.evaluate(a) - space.q(a))), delta)
    return a, trace
