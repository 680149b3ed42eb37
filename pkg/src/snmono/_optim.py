"""Shared numerical plumbing: solver budgets, extended reals, quadratic sups,
multi-start local minimization."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.optimize import minimize

INF = math.inf
RANK_TOL = 1e-10


class SolverBudgetExhausted(RuntimeError):
    """Raised when an iterative solver could not reach its target within budget."""


@dataclass(frozen=True)
class Budget:
    restarts: int = 8
    max_iter: int = 2000
    divergence_radius: float = 1e6
    tol: float = 1e-8
    seed: int = 0

    def with_seed(self, seed: int) -> "Budget":
        return replace(self, seed=seed)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


DEFAULT_BUDGET = Budget()


def ext_real(value: float) -> float:
    """Validate a value of ]-inf, inf]; returns it as a float."""
    value = float(value)
    if math.isnan(value):
        raise ValueError("extended real value is NaN")
    if value == -INF:
        raise ValueError("extended real value is -inf")
    return value


def as_vector(x, dim: Optional[int] = None, name: str = "point") -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"dimension mismatch: {name} has length {v.shape[0]}, expected {dim}")
    return v


def sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def orth_basis(V: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis for the column span of V (rank-revealing SVD)."""
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V.reshape(-1, 1)
    if V.size == 0 or V.shape[1] == 0:
        return np.zeros((V.shape[0], 0))
    U, s, _ = np.linalg.svd(V, full_matrices=False)
    if s.size == 0:
        return np.zeros((V.shape[0], 0))
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    return U[:, :rank]


def null_basis(M: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of {x : M x = 0}."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    scale = max(1.0, s[0]) if s.size else 1.0
    rank = int(np.sum(s > tol * scale))
    return Vt[rank:].T.copy()


def quadratic_sup(G: np.ndarray, h: np.ndarray, const: float = 0.0,
                  tol: float = RANK_TOL) -> tuple[float, Optional[np.ndarray]]:
    """sup_z [-1/2 z'Gz + h'z + const]; returns (+inf, None) when unbounded."""
    G = sym(np.atleast_2d(np.asarray(G, dtype=float)))
    h = np.asarray(h, dtype=float).reshape(-1)
    if G.shape[0] == 0:
        return float(const), np.zeros(0)
    w, U = np.linalg.eigh(G)
    scale = max(1.0, float(np.max(np.abs(w))))
    if np.any(w < -tol * scale * 1e2):
        return INF, None
    beta = U.T @ h
    hscale = 1.0 + float(np.linalg.norm(h))
    pos = w > tol * scale
    if np.any(np.abs(beta[~pos]) > 1e-9 * hscale):
        return INF, None
    coef = np.zeros_like(beta)
    coef[pos] = beta[pos] / w[pos]
    value = float(const + 0.5 * np.sum(beta[pos] * coef[pos]))
    return value, U @ coef


def quadratic_inf(G: np.ndarray, h: np.ndarray, const: float = 0.0,
                  tol: float = RANK_TOL) -> tuple[float, Optional[np.ndarray]]:
    """inf_z [1/2 z'Gz + h'z + const]; returns (-inf, None) when unbounded."""
    value, z = quadratic_sup(G, -np.asarray(h, dtype=float), -const, tol)
    return -value, z


@dataclass
class LocalResult:
    x: np.ndarray
    fun: float
    nfev: int
    evaluations: list[float]


def multistart_minimize(fun: Callable[[np.ndarray], float], starts: Iterable[np.ndarray],
                        jac: Optional[Callable] = None, method: str = "L-BFGS-B",
                        bounds=None, max_iter: int = 2000, record: bool = False,
                        polish: bool = False) -> list[LocalResult]:
    """Run a local minimizer from each start; returns one result per start.

    Each result carries the best point seen during the run, not only the
    final iterate, so nonsmooth stalls still report their best value.
    """
    results = []
    for x0 in starts:
        x0 = np.asarray(x0, dtype=float)
        seen: list[float] = []
        best = [x0.copy(), _safe(fun, x0)]
        seen.append(best[1])

        def wrapped(x, _fun=fun, _best=best, _seen=seen):
            v = _safe(_fun, x)
            if record:
                _seen.append(v)
            if v < _best[1]:
                _best[0] = np.array(x, dtype=float)
                _best[1] = v
            return v

        if jac is not None:
            def obj(x):
                return wrapped(x)
            res_jac = jac
        else:
            obj = wrapped
            res_jac = None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if np.isfinite(best[1]):
                try:
                    if method in ("Nelder-Mead", "Powell"):
                        minimize(obj, x0, method=method, bounds=bounds,
                                 options={"maxiter": max_iter, "xatol": 1e-12, "fatol": 1e-15}
                                 if method == "Nelder-Mead" else {"maxiter": max_iter})
                    else:
                        minimize(obj, x0, jac=res_jac, method=method, bounds=bounds,
                                 options={"maxiter": max_iter})
                except (ValueError, RuntimeError, FloatingPointError, np.linalg.LinAlgError):
                    # includes Powell's bracket failure on unbounded objectives
                    pass
                if polish and best[0].size <= 12:
                    try:
                        minimize(obj, best[0].copy(), method="Nelder-Mead",
                                 options={"maxiter": 200 * best[0].size, "xatol": 1e-12,
                                          "fatol": 1e-15})
                    except ValueError:
                        pass
        results.append(LocalResult(best[0], float(best[1]), len(seen), seen))
    return results


def _safe(fun, x) -> float:
    with np.errstate(all="ignore"):
        try:
            v = float(fun(np.asarray(x, dtype=float)))
        except (OverflowError, FloatingPointError):
            return INF
    if math.isnan(v):
        return INF
    return v


def lattice(spec: list[tuple[float, float, float]]) -> np.ndarray:
    """Points of a rectangular lattice given (lo, hi, step) per coordinate."""
    axes = []
    for lo, hi, step in spec:
        if step <= 0 or hi < lo:
            raise ValueError(f"invalid grid axis {(lo, hi, step)}")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        axes.append(lo + step * np.arange(count))
    if not axes:
        raise ValueError("empty grid")
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def centered_lattice(dim: int, side: int = 5, step: float = 0.5) -> np.ndarray:
    """Default probe lattice: `side` points per coordinate centred on 0."""
    half = (side - 1) / 2 * step
    return lattice([(-half, half, step)] * dim)
