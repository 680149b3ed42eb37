"""L-positive sets: representations, positivity, r_L-density gaps,
quasidensity certification, stable radii and maximality probes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize

from ._optim import (DEFAULT_BUDGET, INF, Budget, as_vector, centered_lattice, multistart_minimize,
                     orth_basis, quadratic_inf, quadratic_sup)
from .convex_fn import MEMBER_TOL, ConvexFn
from .sn_core import NormKind, SnSpace, product_space


@dataclass
class GapResult:
    """inf r_L(A - c) estimate.

    `lower` is a certified lower bound for the infimum (None when only an
    upper bound from a feasible point is known); `flagged` marks budget
    exhaustion.
    """

    value: float
    minimizer: np.ndarray
    lower: Optional[float] = None
    flagged: bool = False


class LPositiveSet:
    """A nonempty subset of an SN space, represented lazily."""

    kind = "abstract"
    space: SnSpace

    def gap(self, c, budget: Budget = DEFAULT_BUDGET) -> GapResult:
        raise NotImplementedError

    def gaps(self, probes, budget: Budget = DEFAULT_BUDGET) -> list[GapResult]:
        return [self.gap(c, budget) for c in np.atleast_2d(probes)]

    def inf_q(self, b, budget: Budget = DEFAULT_BUDGET) -> float:
        """inf_{a in A} q_L(a - b)."""
        raise NotImplementedError

    def sup_theta(self, bstar, budget: Budget = DEFAULT_BUDGET) -> float:
        """sup_{a in A} [<a, b*> - q_L(a)]."""
        raise NotImplementedError

    def contains(self, b, tol: float = 1e-8) -> bool:
        raise NotImplementedError

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def dist(self, b) -> float:
        raise NotImplementedError

    def gap_in_ball(self, c, radius: float, budget: Budget = DEFAULT_BUDGET) -> float:
        """inf {r_L(a - c) : a in A, |a - c| <= radius}."""
        raise NotImplementedError

    # projections onto the blocks of a product space
    def pi1(self, pts: np.ndarray) -> np.ndarray:
        return np.atleast_2d(pts)[:, :self.space.n]

    def pi2(self, pts: np.ndarray) -> np.ndarray:
        return np.atleast_2d(pts)[:, self.space.n:]

    def to_dict(self) -> dict:
        raise NotImplementedError(f"{self.kind} is not serializable")


# ---------------------------------------------------------------------------
# finite clouds


class FiniteCloud(LPositiveSet):
    """Finitely many points; every quantity is an exact finite min or max."""

    kind = "finite-cloud"

    def __init__(self, space: SnSpace, points):
        P = np.atleast_2d(np.asarray(points, dtype=float))
        if P.shape[0] == 0:
            raise ValueError("an L-positive set must be nonempty")
        if P.shape[1] != space.dim:
            raise ValueError(f"dimension mismatch: points have {P.shape[1]} coords, space {space.dim}")
        self.space, self.points = space, P

    def gap(self, c, budget: Budget = DEFAULT_BUDGET) -> GapResult:
        c = self.space.point(c)
        vals = self.space.r_many(self.points - c)
        i = int(np.argmin(vals))
        v = max(float(vals[i]), 0.0)
        return GapResult(v, self.points[i].copy(), lower=v)

    def inf_q(self, b, budget: Budget = DEFAULT_BUDGET) -> float:
        return float(np.min(self.space.q_many(self.points - self.space.point(b))))

    def sup_theta(self, bstar, budget: Budget = DEFAULT_BUDGET) -> float:
        bstar = self.space.point(bstar)
        return float(np.max(self.points @ bstar - self.space.q_many(self.points)))

    def dist(self, b) -> float:
        return float(np.min(self.space.norm_kind.norms(self.points - self.space.point(b))))

    def contains(self, b, tol: float = 1e-8) -> bool:
        return self.dist(b) <= tol

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        return self.points[rng.integers(0, self.points.shape[0], size=k)]

    def gap_in_ball(self, c, radius: float, budget: Budget = DEFAULT_BUDGET) -> float:
        c = self.space.point(c)
        d = self.points - c
        ok = self.space.norm_kind.norms(d) <= radius + 1e-15
        if not ok.any():
            return INF
        return max(float(np.min(self.space.r_many(d[ok]))), 0.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "points": self.points.tolist()}


# ---------------------------------------------------------------------------
# affine subspaces


class LinearSubspace(LPositiveSet):
    """origin + span(basis); a linear relation when origin = 0.

    q_L is quadratic on the set, so inf_q and sup_theta are exact in every
    norm. The gap is exact for euclidean norms and a convex program
    otherwise (r_L restricted to a monotone subspace is convex).
    """

    kind = "linear-subspace"

    def __init__(self, space: SnSpace, basis, origin=None):
        B = np.asarray(basis, dtype=float).reshape(space.dim, -1)
        self.space = space
        self.basis = orth_basis(B)
        o = np.zeros(space.dim) if origin is None else space.point(origin)
        self.origin = o - self.basis @ (self.basis.T @ o)

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def _reduced(self, c: np.ndarray, M: np.ndarray):
        V, w = self.basis, self.origin - c
        return V.T @ M @ V, V.T @ M @ w, 0.5 * float(w @ M @ w)

    def gap(self, c, budget: Budget = DEFAULT_BUDGET) -> GapResult:
        c = self.space.point(c)
        if self.space.is_euclidean:
            P = np.eye(self.space.dim) + self.space.L
            G, h, k = self._reduced(c, P)
            value, z = quadratic_inf(G, h, k)
            a = self.origin + self.basis @ z
            v = max(value, 0.0)
            return GapResult(v, a, lower=v)
        return _lifted_gap(self.space, self.basis, self.origin - c, c, budget)

    def gaps(self, probes, budget: Budget = DEFAULT_BUDGET) -> list[GapResult]:
        C = np.atleast_2d(np.asarray(probes, dtype=float))
        if not self.space.is_euclidean:
            return super().gaps(C, budget)
        P = np.eye(self.space.dim) + self.space.L
        V = self.basis
        W = self.origin[None, :] - C
        G = V.T @ P @ V
        H = W @ P @ V
        Z = -np.linalg.lstsq(G, H.T, rcond=None)[0].T if V.shape[1] else np.zeros((C.shape[0], 0))
        A = self.origin[None, :] + Z @ V.T
        D = A - C
        vals = np.maximum(0.5 * np.einsum("ij,jk,ik->i", D, P, D), 0.0)
        return [GapResult(float(v), a, lower=float(v)) for v, a in zip(vals, A)]

    def inf_q(self, b, budget: Budget = DEFAULT_BUDGET) -> float:
        G, h, k = self._reduced(self.space.point(b), self.space.L)
        return quadratic_inf(G, h, k)[0]

    def sup_theta(self, bstar, budget: Budget = DEFAULT_BUDGET) -> float:
        bstar = self.space.point(bstar)
        L, V, o = self.space.L, self.basis, self.origin
        return quadratic_sup(V.T @ L @ V, V.T @ (bstar - L @ o), float(o @ bstar) - self.space.q(o))[0]

    def project(self, b) -> np.ndarray:
        d = self.space.point(b) - self.origin
        return self.origin + self.basis @ (self.basis.T @ d)

    def contains(self, b, tol: float = 1e-8) -> bool:
        b = self.space.point(b)
        return float(np.linalg.norm(b - self.project(b))) <= tol * (1.0 + np.linalg.norm(b))

    def dist(self, b) -> float:
        b = self.space.point(b)
        if self.space.is_euclidean:
            return float(np.linalg.norm(b - self.project(b)))
        kind = self.space.norm_kind
        V, w = self.basis, self.origin - b
        z0 = V.T @ (b - self.origin)
        res = multistart_minimize(lambda z: kind.norm(V @ z + w), [z0], method="Powell",
                                  max_iter=20000, polish=True)
        return min(kind.norm(w + V @ z0), res[0].fun)

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        return self.origin[None, :] + rng.standard_normal((k, self.rank)) @ self.basis.T

    def gap_in_ball(self, c, radius: float, budget: Budget = DEFAULT_BUDGET) -> float:
        c = self.space.point(c)
        if self.space.is_euclidean:
            return _euclidean_ball_gap(self.space, self.basis, self.origin - c, radius)
        return _ball_constrained_gap(self.space, lambda z: self.origin + self.basis @ z,
                                     self.rank, c, radius, self.basis.T @ (c - self.origin))

    def quadratic_form_min(self) -> tuple[float, np.ndarray]:
        """Smallest eigenvalue of q_L on the direction space, with its direction."""
        V = self.basis
        if V.shape[1] == 0:
            return 0.0, np.zeros(self.space.dim)
        K = 0.5 * V.T @ self.space.L @ V
        w, U = np.linalg.eigh(0.5 * (K + K.T))
        return float(w[0]), V @ U[:, 0]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "basis": self.basis.T.tolist(), "origin": self.origin.tolist()}


class OperatorGraph(LinearSubspace):
    """{(x, Mx + m)} in the product space over R^n."""

    kind = "operator-graph"

    def __init__(self, space: SnSpace, M, offset=None):
        n = space.n
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape != (n, n):
            raise ValueError(f"dimension mismatch: M has shape {M.shape}, block size {n}")
        self.M = M
        self.offset = np.zeros(n) if offset is None else as_vector(offset, n)
        super().__init__(space, np.vstack([np.eye(n), M]),
                         np.concatenate([np.zeros(n), self.offset]))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "M": self.M.tolist(), "offset": self.offset.tolist()}


def _euclidean_ball_gap(space: SnSpace, V: np.ndarray, w: np.ndarray, radius: float) -> float:
    """min 1/2 u'(I + L)u over u = w + Vz with |u| <= radius, V orthonormal.

    Writing u = w_perp + Vy gives |u|^2 = |w_perp|^2 + |y|^2, and the KKT
    condition (K + mu I)y = -g is solved along the eigenbasis of K.
    """
    P = np.eye(space.dim) + space.L
    wp = w - V @ (V.T @ w)
    room = radius ** 2 - float(wp @ wp)
    if room < -1e-12 * (1.0 + radius ** 2):
        return INF
    room = max(room, 0.0)
    value = lambda y: 0.5 * float((wp + V @ y) @ P @ (wp + V @ y))
    if V.shape[1] == 0:
        return value(np.zeros(0))
    K = V.T @ P @ V
    g = V.T @ P @ wp
    lam, U = np.linalg.eigh(0.5 * (K + K.T))
    lam = np.maximum(lam, 0.0)
    h = U.T @ g
    y0 = -np.linalg.lstsq(K, g, rcond=None)[0]
    if float(y0 @ y0) <= room:
        return max(value(y0), 0.0)
    keep = np.abs(h) > 1e-14 * (1.0 + np.max(np.abs(h)))
    lam, h, U = lam[keep], h[keep], U[:, keep]
    norm2 = lambda mu: float(np.sum((h / (lam + mu)) ** 2))
    hi = 1.0
    while norm2(hi) > room:
        hi *= 2.0
    # |y(mu)| decreases in mu; y0 lies outside the ball, so the root is positive
    mu = brentq(lambda m: norm2(m) - room, 1e-300, hi, xtol=1e-15, rtol=1e-14)
    y = -U @ (h / (lam + mu))
    return max(value(y), 0.0)


def _ball_constrained_gap(space: SnSpace, param, m: int, c: np.ndarray, radius: float,
                          z0: np.ndarray) -> float:
    """min r_L(param(z) - c) subject to |param(z) - c| <= radius (SLSQP, multistart)."""
    kind = space.norm_kind
    obj = lambda z: space.r(param(z) - c)
    con = {"type": "ineq", "fun": lambda z: radius ** 2 - kind.norm(param(z) - c) ** 2}
    best = INF
    rng = np.random.default_rng(0)
    starts = [z0, np.zeros(m)] + [z0 + rng.standard_normal(m) for _ in range(4)]
    for s in starts:
        res = minimize(obj, s, constraints=[con], method="SLSQP",
                       options={"ftol": 1e-15, "maxiter": 500})
        if con["fun"](res.x) >= -1e-9:
            best = min(best, max(float(res.fun), 0.0))
    return best


def _lifted_gap(space: SnSpace, V: np.ndarray, w: np.ndarray, c: np.ndarray,
                budget: Budget) -> GapResult:
    """min_z r_L(Vz + w) for ell1/ellinf block norms via a smooth lifting.

    Each |u|_1^2 becomes (sum t)^2 with t >= |u|; each |u|_inf^2 becomes s^2
    with s >= |u_i|. The lifted problem is a convex QP when q_L is convex on
    span V, solved by SLSQP.
    """
    kind = space.norm_kind
    blocks = list(kind.inner) if kind.tag == "product" else [kind]
    sizes = [space.dim // len(blocks)] * len(blocks)
    m = V.shape[1]
    L = space.L
    layout = []
    pos = m
    start = 0
    for blk, size in zip(blocks, sizes):
        aux = size if blk.tag == "ell1" else (1 if blk.tag == "ellinf" else 0)
        layout.append((blk.tag, start, size, pos, aux))
        pos += aux
        start += size
    nvar = pos

    def u_of(v):
        return V @ v[:m] + w

    def fun(v):
        u = u_of(v)
        total = 0.5 * float(u @ L @ u)
        for tag, s0, size, a0, aux in layout:
            if tag == "euclidean":
                total += 0.5 * float(u[s0:s0 + size] @ u[s0:s0 + size])
            elif tag == "ell1":
                total += 0.5 * float(np.sum(v[a0:a0 + aux])) ** 2
            else:
                total += 0.5 * float(v[a0]) ** 2
        return total

    def grad(v):
        u = u_of(v)
        g = np.zeros(nvar)
        gu = L @ u
        for tag, s0, size, a0, aux in layout:
            if tag == "euclidean":
                gu[s0:s0 + size] += u[s0:s0 + size]
            elif tag == "ell1":
                g[a0:a0 + aux] = float(np.sum(v[a0:a0 + aux]))
            else:
                g[a0] = float(v[a0])
        g[:m] = V.T @ gu
        return g

    rows, rhs = [], []
    for tag, s0, size, a0, aux in layout:
        if tag == "euclidean":
            continue
        for i in range(size):
            for sign in (1.0, -1.0):
                row = np.zeros(nvar)
                row[:m] = -sign * V[s0 + i]
                if tag == "ell1":
                    row[a0 + i] = 1.0
                else:
                    row[a0] = 1.0
                rows.append(row)
                rhs.append(sign * w[s0 + i])
    A = np.array(rows) if rows else np.zeros((0, nvar))
    b = np.array(rhs)
    # feasible start: z from least squares, aux at the bound
    z0 = -np.linalg.lstsq(V, w, rcond=None)[0] if m else np.zeros(0)

    def lift(z):
        v = np.zeros(nvar)
        v[:m] = z
        u = V @ z + w
        for tag, s0, size, a0, aux in layout:
            if tag == "ell1":
                v[a0:a0 + aux] = np.abs(u[s0:s0 + size])
            elif tag == "ellinf":
                v[a0] = np.max(np.abs(u[s0:s0 + size])) if size else 0.0
        return v

    rng = budget.rng()
    starts = [lift(z0), lift(np.zeros(m))] + [lift(z0 + rng.standard_normal(m)) for _ in range(2)]
    best_val, best_z, flagged = INF, z0, False
    cons = [{"type": "ineq", "fun": lambda v: A @ v - b, "jac": lambda v: A}] if A.size else []
    for s in starts:
        res = minimize(fun, s, jac=grad, constraints=cons, method="SLSQP",
                       options={"ftol": 1e-16, "maxiter": budget.max_iter})
        # evaluate the true objective at the z-part only; it is feasible for any z
        val = space.r(u_of(res.x))
        if val < best_val:
            best_val, best_z = val, res.x[:m]
            flagged = not res.success
    a = c + V @ best_z + w
    return GapResult(max(float(best_val), 0.0), a, lower=None, flagged=flagged)


# ---------------------------------------------------------------------------
# graphs of maximally monotone maps with a resolvent


class GraphSet(LPositiveSet):
    """G(S) for a MonoMap S with a resolvent, parametrized by Minty's map
    z -> (J z, z - J z) over R^n."""

    kind = "subdifferential-graph"

    def __init__(self, space: SnSpace, mono_map):
        if not space.is_product or space.n != mono_map.n:
            raise ValueError("graph sets live in the product space over the map's domain")
        self.space, self.map = space, mono_map

    def point_of(self, z: np.ndarray) -> np.ndarray:
        x = self.map.resolvent(z)
        return np.concatenate([x, z - x])

    def _minimize(self, fun, c: np.ndarray, budget: Budget) -> tuple[float, np.ndarray]:
        n = self.space.n
        rng = budget.rng()
        scale = 1.0 + float(np.max(np.abs(c)))
        starts = [np.zeros(n)] + [scale * rng.standard_normal(n) for _ in range(max(2, budget.restarts // 2))]
        obj = lambda z: fun(self.point_of(z))
        runs = multistart_minimize(obj, starts, method="Nelder-Mead" if n > 1 else "Powell",
                                   max_iter=budget.max_iter, polish=True)
        best = min(runs, key=lambda r: r.fun)
        return float(best.fun), self.point_of(best.x)

    def gap(self, c, budget: Budget = DEFAULT_BUDGET) -> GapResult:
        c = self.space.point(c)
        if self.space.is_euclidean:
            # r_L((Jz, z - Jz) - (w, w*)) = |z - w - w*|^2 / 2, so Minty's point z = w + w* is exact
            w, ws = self.space.split(c)
            a = self.point_of(w + ws)
            return GapResult(max(self.space.r(a - c), 0.0), a, lower=0.0)
        val, a = self._minimize(lambda p: self.space.r(p - c), c, budget)
        return GapResult(max(val, 0.0), a, lower=None)

    def inf_q(self, b, budget: Budget = DEFAULT_BUDGET) -> float:
        b = self.space.point(b)
        return self._minimize(lambda p: self.space.q(p - b), b, budget)[0]

    def sup_theta(self, bstar, budget: Budget = DEFAULT_BUDGET) -> float:
        bstar = self.space.point(bstar)
        return -self._minimize(lambda p: self.space.q(p) - float(p @ bstar), bstar, budget)[0]

    def contains(self, b, tol: float = 1e-8) -> bool:
        x, xs = self.space.split(b)
        return self.map.contains(x, xs, tol)

    def dist(self, b) -> float:
        b = self.space.point(b)
        return self._minimize(lambda p: self.space.norm_kind.norm(p - b), b, DEFAULT_BUDGET)[0]

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        Z = 2.0 * rng.standard_normal((k, self.space.n))
        return np.array([self.point_of(z) for z in Z])

    def gap_in_ball(self, c, radius: float, budget: Budget = DEFAULT_BUDGET) -> float:
        c = self.space.point(c)
        x, xs = self.space.split(c)
        return _ball_constrained_gap(self.space, self.point_of, self.space.n, c, radius, x + xs)


# ---------------------------------------------------------------------------
# truncated sequence operators


def sequence_matrix(kind: str, N: int, lam: float = 1.0, mu: float = 0.0) -> np.ndarray:
    """(N+1) x N matrix of x -> Sx including the constant tail slot.

    Slot N holds the eventual value of (Sx)_n: 0 for the tail operator and
    sigma = sum(x) for the head operator.
    """
    T = np.triu(np.ones((N, N)))
    H = np.tril(np.ones((N, N)))
    if kind == "tail":
        lam, mu = 1.0, 0.0
    elif kind == "head":
        lam, mu = 0.0, 1.0
    elif kind == "gossez":
        lam, mu = 1.0, -1.0
    elif kind != "combo":
        raise ValueError(f"unknown sequence operator {kind!r}")
    S = lam * T + mu * H
    return np.vstack([S, mu * np.ones((1, N))])


class SequenceGraph(LinearSubspace):
    """{(x, Sx)} for S = lam*T + mu*H on finite-support x in R^N.

    Coordinates live in R^(N+1) x R^(N+1): the E-block carries x with a zero
    last slot, the E*-block carries Sx followed by its limit value, so the
    ell_inf norm of E*-vectors is exact for finite support.
    """

    kind = "sequence-operator"

    def __init__(self, op: str = "tail", N: int = 200, lam: float = 1.0, mu: float = 0.0):
        self.op, self.N = op, int(N)
        self.S = sequence_matrix(op, self.N, lam, mu)
        self.lam = float(lam) if op == "combo" else {"tail": 1.0, "head": 0.0, "gossez": 1.0}[op]
        self.mu = float(mu) if op == "combo" else {"tail": 0.0, "head": 1.0, "gossez": -1.0}[op]
        space = product_space(self.N + 1, "ell1")
        E = np.vstack([np.eye(self.N), np.zeros((1, self.N))])
        LinearSubspace.__init__(self, space, np.vstack([E, self.S]))
        self._E = E

    def graph_point(self, x) -> np.ndarray:
        x = as_vector(x, self.N)
        return np.concatenate([x, [0.0], self.S @ x])

    def e_star(self, t: float = 1.0) -> np.ndarray:
        """The probe (0, t e*) with e* = (1, 1, ...)."""
        return np.concatenate([np.zeros(self.N + 1), t * np.ones(self.N + 1)])

    def objective(self, x, c) -> float:
        return self.space.r(self.graph_point(x) - c)

    def analytic_lower_bound(self, c) -> Optional[float]:
        """t^2/4 at probes (0, t e*) for the tail operator, else None."""
        if self.op != "tail" and not (self.lam == 1.0 and self.mu == 0.0):
            return None
        c = self.space.point(c)
        w, ws = c[:self.N + 1], c[self.N + 1:]
        if np.any(w != 0.0) or np.ptp(ws) != 0.0:
            return None
        return 0.25 * float(ws[0]) ** 2

    def minimize_gap(self, c, restarts: int = 8, seed: int = 0, record: bool = False,
                     max_iter: int = 15000):
        """Multi-start L-BFGS-B on the split form x = w + p - n, p, n >= 0.

        Returns (best value, best x, every evaluated objective value).
        """
        c = self.space.point(c)
        N = self.N
        S = self.S
        w, ws = c[:N + 1], c[N + 1:]
        wx = w[:N]
        const_l1 = abs(w[N])
        seen: list[float] = []

        def split_obj(v):
            p, nn = v[:N], v[N:]
            x = wx + p - nn
            u = S @ x - ws
            i = int(np.argmax(np.abs(u)))
            m = float(abs(u[i]))
            s = float(np.sum(p + nn)) + const_l1
            xe = np.concatenate([x, [0.0]]) - w
            val = 0.5 * s * s + 0.5 * m * m + float(xe @ u)
            gx = S[:N + 1].T @ xe + u[:N]
            gx = gx + m * np.sign(u[i]) * S[i]
            if record:
                seen.append(val)
            g = np.concatenate([s + gx, s - gx])
            return val, g

        rng = np.random.default_rng(seed)
        best_val, best_x = INF, wx.copy()
        for k in range(restarts):
            if k == 0:
                x0 = np.zeros(N)
            else:
                x0 = rng.standard_normal(N) * rng.uniform(0.01, 1.0) / math.sqrt(N)
            d = x0 - wx
            v0 = np.concatenate([np.maximum(d, 0.0), np.maximum(-d, 0.0)])
            res = minimize(split_obj, v0, jac=True, method="L-BFGS-B",
                           bounds=[(0.0, None)] * (2 * N),
                           options={"maxiter": max_iter, "maxfun": 4 * max_iter,
                                    "ftol": 1e-15, "gtol": 1e-12})
            x = wx + res.x[:N] - res.x[N:]
            val = self.objective(x, c)
            if record:
                seen.append(val)
            if val < best_val:
                best_val, best_x = val, x
        return best_val, best_x, seen

    def gap(self, c, budget: Budget = DEFAULT_BUDGET) -> GapResult:
        c = self.space.point(c)
        val, x, _ = self.minimize_gap(c, restarts=max(2, budget.restarts // 2), seed=budget.seed)
        return GapResult(max(val, 0.0), self.graph_point(x) , lower=self.analytic_lower_bound(c))

    def contains(self, b, tol: float = 1e-8) -> bool:
        b = self.space.point(b)
        x = b[:self.N]
        return (abs(b[self.N]) <= tol and
                float(np.max(np.abs(self.S @ x - b[self.N + 1:]))) <= tol * (1.0 + np.max(np.abs(b))))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "op": self.op, "N": self.N, "lam": self.lam, "mu": self.mu}


# ---------------------------------------------------------------------------
# q_L + indicator of a set, as a convex function with its own touching solver


class QuadraticOnSet(ConvexFn):
    """k = q_L + indicator of A; convex when A is a monotone subspace or cloud
    is L-positive. Its touching infimum at c equals the density gap of A."""

    tag = "quadratic-on-set"

    def __init__(self, A: LPositiveSet):
        self.A = A
        self.dim = A.space.dim

    def evaluate(self, x) -> float:
        return self.A.space.q(x) if self.A.contains(x) else INF

    def touching_gap(self, c, budget: Budget):
        res = self.A.gap(c, budget)
        return res.value, res.minimizer, res.lower


# ---------------------------------------------------------------------------
# operations


@dataclass
class PositivityReport:
    ok: bool
    min_q: float
    witness: Optional[tuple[np.ndarray, np.ndarray]] = None
    exhaustive: bool = True

    def to_dict(self) -> dict:
        w = None if self.witness is None else [self.witness[0].tolist(), self.witness[1].tolist()]
        return {"ok": self.ok, "min_q": self.min_q, "witness": w, "exhaustive": self.exhaustive}


def is_L_positive(A: LPositiveSet, samples: int = 200, tol: float = 1e-12,
                  seed: int = 0) -> PositivityReport:
    """Pairwise q_L(a - c) >= -tol; exhaustive for clouds and subspaces."""
    space = A.space
    if isinstance(A, FiniteCloud):
        P = A.points
        D = P[:, None, :] - P[None, :, :]
        Q = 0.5 * np.einsum("ijk,kl,ijl->ij", D, space.L, D)
        i, j = np.unravel_index(np.argmin(Q), Q.shape)
        m = float(Q[i, j])
        ok = m >= -tol
        return PositivityReport(ok, m, None if ok else (P[i].copy(), P[j].copy()))
    if isinstance(A, LinearSubspace):
        lam, d = A.quadratic_form_min()
        ok = lam >= -tol
        return PositivityReport(ok, lam, None if ok else (A.origin.copy(), A.origin + d))
    rng = np.random.default_rng(seed)
    P = A.sample(samples, rng)
    D = P[:, None, :] - P[None, :, :]
    Q = 0.5 * np.einsum("ijk,kl,ijl->ij", D, space.L, D)
    i, j = np.unravel_index(np.argmin(Q), Q.shape)
    m = float(Q[i, j])
    ok = m >= -tol
    return PositivityReport(ok, m, None if ok else (P[i], P[j]), exhaustive=False)


def density_gap(A: LPositiveSet, c, budget: Budget = DEFAULT_BUDGET) -> tuple[float, np.ndarray]:
    res = A.gap(c, budget)
    return res.value, res.minimizer


@dataclass
class ProbeRecord:
    probe: np.ndarray
    gap: float
    minimizer: np.ndarray
    radius: float
    lower: Optional[float] = None

    def to_dict(self) -> dict:
        return {"probe": self.probe.tolist(), "gap": self.gap, "minimizer": self.minimizer.tolist(),
                "radius": self.radius, "lower_bound": self.lower}


@dataclass
class GapCertificate:
    records: list[ProbeRecord]
    verdict: str
    witness: Optional[np.ndarray] = None
    lower_bound: Optional[float] = None
    tol: float = 1e-8

    @property
    def quasidense(self) -> bool:
        return self.verdict == "quasidense-on-grid"

    @property
    def max_gap(self) -> float:
        return max(r.gap for r in self.records)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "tol": self.tol, "max_gap": self.max_gap,
                "witness": None if self.witness is None else self.witness.tolist(),
                "lower_bound": self.lower_bound,
                "records": [r.to_dict() for r in self.records]}

    def to_csv(self) -> str:
        lines = ["probe,gap"]
        for r in self.records:
            lines.append(" ".join(repr(float(v)) for v in r.probe) + "," + repr(float(r.gap)))
        return "\n".join(lines) + "\n"


def default_probe_grid(space: SnSpace, side: int = 5, step: float = 0.5) -> np.ndarray:
    return centered_lattice(space.dim, side, step)


def certify_quasidense(A: LPositiveSet, probe_grid=None, budget: Budget = DEFAULT_BUDGET,
                       tol: Optional[float] = None) -> GapCertificate:
    """Gap at every probe; refutation only with a certified positive lower bound."""
    space = A.space
    if tol is None:
        tol = 1e-8 if space.is_euclidean else 1e-6
    probes = default_probe_grid(space) if probe_grid is None else np.atleast_2d(probe_grid)
    if probes.shape[0] == 0:
        raise ValueError("empty probe grid")
    results = A.gaps(probes, budget)
    probes = np.asarray(probes, dtype=float)
    dists = space.norm_kind.norms(np.array([r.minimizer for r in results]) - probes)
    records = [ProbeRecord(p, r.value, r.minimizer, float(d), r.lower)
               for p, r, d in zip(probes, results, dists)]
    bad = [r for r in records if r.gap > tol]
    if not bad:
        return GapCertificate(records, "quasidense-on-grid", tol=tol)
    certified = [r for r in bad if r.lower is not None and r.lower > tol]
    if certified:
        w = max(certified, key=lambda r: r.lower)
        return GapCertificate(records, "refuted", w.probe, w.lower, tol)
    w = max(bad, key=lambda r: r.gap)
    return GapCertificate(records, "no-gap-found-within-budget", w.probe, None, tol)


def stable_radius(A: LPositiveSet, c, tol: float = 1e-8, budget: Budget = DEFAULT_BUDGET,
                  iters: int = 40) -> float:
    """Smallest K (by bisection) with inf{r_L(a - c): |a - c| <= K} <= tol."""
    c = A.space.point(c)
    res = A.gap(c, budget)
    if res.value > tol:
        raise ValueError(f"gap {res.value:.3e} exceeds tol; stable radius undefined")
    hi = A.space.norm(res.minimizer - c)
    if hi <= 1e-15:
        return 0.0
    if A.gap_in_ball(c, 0.0, budget) <= tol:
        return 0.0
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if A.gap_in_ball(c, mid, budget) <= tol:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-9 * (1.0 + hi):
            break
    return hi


@dataclass
class MaximalityReport:
    verdict: str
    witness: Optional[np.ndarray]
    values: list[float]

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "values": self.values,
                "witness": None if self.witness is None else self.witness.tolist()}


def maximality_probe(A: LPositiveSet, candidates, tol: float = 1e-9,
                     budget: Budget = DEFAULT_BUDGET) -> MaximalityReport:
    """A candidate b outside A with inf q_L(A - b) >= 0 extends A."""
    values = []
    for b in np.atleast_2d(candidates):
        if A.contains(b):
            values.append(float("nan"))
            continue
        v = A.inf_q(b, budget)
        values.append(v)
        if v >= -tol:
            return MaximalityReport("extension-witness", np.asarray(b, float), values)
    return MaximalityReport("maximal-on-candidates", None, values)


def set_from_dict(space: SnSpace, data: dict) -> LPositiveSet:
    kind = data.get("kind")
    if kind == "finite-cloud":
        return FiniteCloud(space, data["points"])
    if kind == "linear-subspace":
        basis = np.asarray(data["basis"], dtype=float).reshape(-1, space.dim).T
        return LinearSubspace(space, basis, data.get("origin"))
    if kind == "operator-graph":
        return OperatorGraph(space, data["M"], data.get("offset"))
    if kind == "sequence-operator":
        return SequenceGraph(data.get("op", "tail"), int(data.get("N", 200)),
                             data.get("lam", 1.0), data.get("mu", 0.0))
    raise ValueError(f"unknown set kind {kind!r}")
