"""Negative alignment pairs, the alignment criterion for quasidensity,
almost-negative-alignment probing and Zagrodny-type norm bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ._optim import DEFAULT_BUDGET, Budget, as_vector
from .convex_fn import ConvexFn
from .mono_ops import MonoMap, deform
from .positive_sets import (FiniteCloud, LPositiveSet, SequenceGraph, certify_quasidense,
                            default_probe_grid)
from .sn_core import NormKind, SnSpace, product_space

SetLike = Union[MonoMap, LPositiveSet]


def _as_set(A: SetLike, space: Optional[SnSpace] = None) -> LPositiveSet:
    if isinstance(A, LPositiveSet):
        return A
    return A.graph_set(space)


@dataclass
class AlignmentResult:
    tau: float
    alpha: float
    beta: float
    w: np.ndarray
    wstar: np.ndarray
    witness: np.ndarray
    dist_primal: float
    dist_dual: float
    pairing: float
    residual: float
    taus: list = field(default_factory=list)
    flagged: bool = False

    @property
    def spread(self) -> float:
        return float(max(self.taus) - min(self.taus)) if self.taus else 0.0

    def holds(self, tol: float = 1e-6) -> bool:
        """The alignment identities at the witness, within tol."""
        a, b, t = self.alpha, self.beta, self.tau
        return (abs(self.dist_primal - a * t) <= tol and abs(self.dist_dual - b * t) <= tol
                and abs(self.pairing + a * b * t * t) <= tol)

    def to_dict(self) -> dict:
        return {"tau": self.tau, "alpha": self.alpha, "beta": self.beta, "w": self.w.tolist(),
                "wstar": self.wstar.tolist(), "witness": self.witness.tolist(),
                "dist_primal": self.dist_primal, "dist_dual": self.dist_dual,
                "pairing": self.pairing, "residual": self.residual, "taus": list(self.taus),
                "spread": self.spread, "flagged": self.flagged}


def _pair_stats(space: SnSpace, s: np.ndarray, w: np.ndarray) -> tuple[float, float, float]:
    kind = space.norm_kind
    x, xs = space.split(s - w)
    return kind.inner[0].norm(x), kind.inner[1].norm(xs), float(x @ xs)


def alignment_tau(A: SetLike, w, wstar, alpha: float = 1.0, beta: float = 1.0,
                  budget: Budget = DEFAULT_BUDGET, restarts: int = 10, tol: float = 1e-6,
                  space: Optional[SnSpace] = None) -> AlignmentResult:
    """The tau with (alpha*tau, beta*tau) a negative alignment pair at (w, w*).

    Deforms A by (x, x*) -> (x/alpha, x*/beta), minimizes r_L over the
    deformed set near (w/alpha, w*/beta) from several seeds, and reads tau
    off the distances of the best point. `taus` keeps one value per seed so
    the spread measures uniqueness.
    """
    S = _as_set(A, space)
    sp = S.space
    if not sp.is_product:
        raise ValueError("negative alignment is defined on E x E*")
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    n = sp.n
    w, wstar = as_vector(w, n), as_vector(wstar, n)
    D = deform(S, alpha, beta)
    u = np.concatenate([w / alpha, wstar / beta])
    taus, best = [], None
    for i in range(restarts):
        b = Budget(budget.restarts, budget.max_iter, budget.divergence_radius, budget.tol,
                   budget.seed + 7919 * i)
        res = D.gap(u, b)
        t = res.minimizer
        p, d, _ = _pair_stats(sp, t, u)
        if abs(p - d) > tol:
            # the two distances agree only in the limit; rerun with a larger budget
            b = Budget(4 * b.restarts, 4 * b.max_iter, b.divergence_radius, b.tol, b.seed + 1)
            res2 = D.gap(u, b)
            if res2.value < res.value:
                res, t = res2, res2.minimizer
                p, d, _ = _pair_stats(sp, t, u)
        taus.append(0.5 * (p + d))
        if best is None or res.value < best[0]:
            best = (res.value, t)
    residual, t = best
    tx, ts = sp.split(t)
    s = np.concatenate([alpha * tx, beta * ts])
    dp, dd, pr = _pair_stats(sp, s, np.concatenate([w, wstar]))
    tau = float(np.median(taus))
    flagged = residual > tol or max(taus) - min(taus) > tol
    return AlignmentResult(tau, float(alpha), float(beta), w, wstar, s, dp, dd, pr, residual, taus, flagged)


def pairing_infimum(A: SetLike, w, wstar, budget: Budget = DEFAULT_BUDGET) -> float:
    """inf over A of <s - w, s* - w*>."""
    S = _as_set(A)
    return S.inf_q(np.concatenate([as_vector(w), as_vector(wstar)]), budget)


@dataclass
class AlignmentVerdict:
    verdict: str
    records: list
    certificate: Optional[str] = None
    agrees: Optional[bool] = None

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "certificate": self.certificate, "agrees": self.agrees,
                "records": self.records}


def quasidense_via_alignment(A: SetLike, probe_grid=None, budget: Budget = DEFAULT_BUDGET,
                             tol: Optional[float] = None, cross_check: bool = True) -> AlignmentVerdict:
    """Search a (tau, tau) negative alignment pair at every probe.

    Alignment at every probe means consistent-with-quasidense. For sets
    outside E x E* alignment is undefined and the verdict falls back to the
    r_L-density gap, recorded as such.
    """
    S = _as_set(A)
    sp = S.space
    if tol is None:
        tol = 1e-8 if sp.is_euclidean else 1e-6
    probes = default_probe_grid(sp) if probe_grid is None else np.atleast_2d(probe_grid)
    if probes.shape[0] == 0:
        raise ValueError("empty probe grid")
    records = []
    ok = True
    if not sp.is_product:
        for c in probes:
            g = S.gap(c, budget)
            records.append({"probe": np.asarray(c, float).tolist(), "gap": g.value,
                            "route": "r_L-density"})
            ok = ok and g.value <= tol
        verdict = "consistent-with-quasidense" if ok else "no-alignment-found"
    else:
        if isinstance(S, SequenceGraph):
            gaps = [S.gap(c, budget) for c in probes]
        else:
            gaps = S.gaps(probes, budget)
        for c, g in zip(probes, gaps):
            d1, d2, pr = _pair_stats(sp, g.minimizer, c)
            tau = 0.5 * (d1 + d2)
            # (tau, tau) alignment: equal distances with pairing -tau^2
            aligned = abs(d1 - d2) <= math.sqrt(2 * tol) and abs(pr + d1 * d2) <= tol
            records.append({"probe": np.asarray(c, float).tolist(), "tau": tau, "dist_primal": d1,
                            "dist_dual": d2, "pairing": pr, "aligned": bool(aligned)})
            ok = ok and aligned
        verdict = "consistent-with-quasidense" if ok else "no-alignment-found"
    out = AlignmentVerdict(verdict, records)
    if cross_check:
        cert = certify_quasidense(S, probes, budget, tol)
        out.certificate = cert.verdict
        out.agrees = (cert.verdict == "quasidense-on-grid") == ok
    return out


@dataclass
class AnaResult:
    verdict: str
    cosine: Optional[float]
    witness: Optional[np.ndarray]
    ratio: Optional[float] = None

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "cosine": self.cosine, "ratio": self.ratio,
                "witness": None if self.witness is None else self.witness.tolist()}


def ana_probe(A: SetLike, w, wstar, epsilon: float = 0.01, budget: Budget = DEFAULT_BUDGET,
              scales=(1.0, 0.5, 2.0, 0.25, 4.0)) -> AnaResult:
    """Look for (s, s*) in A with s != w, s* != w* and cosine <= -1 + epsilon.

    Failure is reported as inconclusive, never as a refutation.
    """
    S = _as_set(A)
    sp = S.space
    n = sp.n
    w, wstar = as_vector(w, n), as_vector(wstar, n)
    c = np.concatenate([w, wstar])
    if S.contains(c):
        raise ValueError("(w, w*) lies in A; almost negative alignment is probed outside A")
    best = None
    for k in scales:
        res = alignment_tau(S, w, wstar, k, 1.0, budget, restarts=1)
        d1, d2, pr = res.dist_primal, res.dist_dual, res.pairing
        if d1 <= 1e-12 or d2 <= 1e-12:
            continue
        cos = pr / (d1 * d2)
        if best is None or cos < best[0]:
            best = (cos, res.witness, d1 / d2)
        if cos <= -1.0 + epsilon:
            return AnaResult("found", cos, res.witness, d1 / d2)
    if best is None:
        return AnaResult("inconclusive", None, None)
    return AnaResult("inconclusive", best[0], best[1], best[2])


# ---------------------------------------------------------------------------
# Zagrodny-type inequalities


def zagrodny_check(points, a, b, space: SnSpace) -> float:
    """Slack of |a| <= sqrt(2 r_L(a - b)) + 5/2 dist(b, A) + |b| for a in a finite A.

    The distance is exact on finite point sets.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    a, b = space.point(a), space.point(b)
    if float(np.min(np.linalg.norm(P - a, axis=1))) > 1e-12 * (1.0 + np.linalg.norm(a)):
        raise ValueError("a is not a point of A")
    dist = float(np.min(space.norm_kind.norms(P - b)))
    rhs = math.sqrt(max(0.0, 2.0 * space.r(a - b))) + 2.5 * dist + space.norm(b)
    return rhs - space.norm(a)


def norm_gap_inequality(space: SnSpace, d, e) -> float:
    """Slack of |e| <= sqrt(2 r_L(e) + 2 r_L(d) - 2 q_L(d - e)) + |d|."""
    d, e = space.point(d), space.point(e)
    rad = 2.0 * space.r(e) + 2.0 * space.r(d) - 2.0 * space.q(d - e)
    return math.sqrt(max(0.0, rad)) + space.norm(d) - space.norm(e)


def positive_pair_bound(space: SnSpace, d, e) -> float:
    """Slack of |e| <= sqrt(2 r_L(e)) + 5/2 |d| for d, e in an L-positive set
    containing both (requires q_L(d - e) >= 0)."""
    d, e = space.point(d), space.point(e)
    if space.q(d - e) < -1e-12 * (1.0 + space.norm(d - e) ** 2):
        raise ValueError("d and e are not L-positively related")
    return math.sqrt(max(0.0, 2.0 * space.r(e))) + 2.5 * space.norm(d) - space.norm(e)


def _excess(space: SnSpace, f: ConvexFn, x: np.ndarray) -> float:
    v = f.evaluate(x) - space.q(x)
    if v < -1e-9 * (1.0 + abs(space.q(x))):
        raise ValueError("f is not bounded below by q_L")
    return max(v, 0.0)


def midpoint_gap_bound(space: SnSpace, f: ConvexFn, a, c) -> float:
    """Slack of -q_L(a - c) <= 2(f - q_L)(a) + 2(f - q_L)(c) for convex f >= q_L."""
    a, c = space.point(a), space.point(c)
    return 2.0 * _excess(space, f, a) + 2.0 * _excess(space, f, c) + space.q(a - c)


def sqrt_gap_bound(space: SnSpace, f: ConvexFn, a, c) -> float:
    """Slack of -q_L(a - c) <= [sqrt((f - q_L)(a)) + sqrt((f - q_L)(c))]^2."""
    a, c = space.point(a), space.point(c)
    s = math.sqrt(_excess(space, f, a)) + math.sqrt(_excess(space, f, c))
    return s * s + space.q(a - c)


def graph_norm_bound(points, s, w, space: SnSpace) -> float:
    """Slack of |(s, s*)| <= M + sqrt(|s - w|^2 + |s* - w*|^2 + 2<s - w, s* - w*>)
    with M = 5/2 dist((w, w*), A) + |(w, w*)|, for a point s of a finite monotone A."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    s, w = space.point(s), space.point(w)
    M = 2.5 * float(np.min(space.norm_kind.norms(P - w))) + space.norm(w)
    d1, d2, pr = _pair_stats(space, s, w)
    return M + math.sqrt(max(0.0, d1 * d1 + d2 * d2 + 2 * pr)) - space.norm(s)


def random_monotone_cloud(n: int, k: int, rng: np.random.Generator,
                          norm: str = "euclidean") -> FiniteCloud:
    """k points of the graph of a random monotone map on R^n."""
    kind = rng.integers(0, 3)
    X = 2.0 * rng.standard_normal((k, n))
    if kind == 0:
        G = rng.standard_normal((n, n))
        K = rng.standard_normal((n, n))
        M = G @ G.T + (K - K.T)
        Xs = X @ M.T
    elif kind == 1:
        # gradient of a convex separable function
        Xs = np.sign(X) * np.abs(X) ** rng.uniform(0.5, 3.0) + rng.uniform(0.0, 1.0) * np.sign(X)
    else:
        # Minty points of a random nonexpansive map
        N = rng.standard_normal((n, n))
        N /= np.linalg.norm(N, 2)
        Z = X
        X = 0.5 * (Z + Z @ N.T)
        Xs = Z - X
    return FiniteCloud(product_space(n, norm), np.hstack([X, Xs]))


def alignment_library() -> list[dict]:
    """Twenty (map, (w, w*), alpha, beta) cases on closed monotone quasidense maps."""
    from .convex_fn import Indicator, NormPower, Quadratic
    from .mono_ops import LinearMap, SubdiffMap, op_sum

    ident = LinearMap([[1.0]])
    rot = LinearMap([[0.0, 1.0], [-1.0, 0.0]])
    mixed = LinearMap([[2.0, 1.0], [-1.0, 0.5]])
    absv = SubdiffMap(NormPower(1, 1.0, 1))
    half_sq = SubdiffMap(Quadratic(np.eye(1)))
    box = SubdiffMap(Indicator(1, lo=[0.0], hi=[1.0]))
    norm2 = SubdiffMap(NormPower(2, 1.0, 1))
    abs_plus_lin = op_sum(absv, LinearMap([[0.5]]))
    cases = [
        ("identity-off-graph", ident, [1.0], [-1.0], 1.0, 1.0),
        ("identity-on-graph", ident, [1.0], [1.0], 1.0, 1.0),
        ("identity-scaled", ident, [2.0], [0.0], 2.0, 0.5),
        ("identity-far", ident, [-3.0], [1.0], 1.0, 3.0),
        ("rotation-a", rot, [1.0, 0.0], [0.0, 1.0], 1.0, 1.0),
        ("rotation-b", rot, [0.5, -1.0], [2.0, 0.0], 0.5, 2.0),
        ("mixed-linear-a", mixed, [1.0, 1.0], [0.0, 0.0], 1.0, 1.0),
        ("mixed-linear-b", mixed, [-1.0, 2.0], [1.0, -1.0], 3.0, 1.0),
        ("abs-a", absv, [2.0], [3.0], 2.0, 0.5),
        ("abs-b", absv, [0.0], [0.5], 1.0, 1.0),
        ("abs-c", absv, [-1.0], [2.0], 1.0, 1.0),
        ("half-square-a", half_sq, [1.0], [-2.0], 1.0, 1.0),
        ("half-square-b", half_sq, [0.0], [3.0], 0.5, 1.5),
        ("interval-a", box, [2.0], [3.0], 1.0, 1.0),
        ("interval-b", box, [0.5], [-1.0], 2.0, 1.0),
        ("interval-c", box, [-1.0], [-1.0], 1.0, 0.25),
        ("euclidean-norm-2d", norm2, [1.0, -1.0], [0.0, 2.0], 1.0, 1.0),
        ("euclidean-norm-origin", norm2, [0.0, 0.0], [2.0, 0.0], 1.0, 1.0),
        ("abs-plus-linear-a", abs_plus_lin, [1.0], [-1.0], 1.0, 1.0),
        ("abs-plus-linear-b", abs_plus_lin, [0.0], [0.0], 2.0, 1.0),
    ]
    return [{"name": n, "map": S, "w": np.array(w), "wstar": np.array(ws), "alpha": a, "beta": b}
            for n, S, w, ws, a, b in cases]
