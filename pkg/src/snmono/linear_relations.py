"""Linear relations in R^n x R^n: polar subspaces, adjoints, the eigenvalue
test for quasidensity and the adjoint-monotonicity equivalences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._optim import RANK_TOL, as_vector, null_basis, orth_basis
from .positive_sets import LinearSubspace, maximality_probe
from .sn_core import SnSpace, product_space, swap_matrix


class InconsistentVerdicts(RuntimeError):
    """The three equivalent quasidensity criteria disagree."""


class LinearRelation:
    """A subspace of R^n x R^n spanned by the columns of `basis`.

    The first n rows are the E-block, the last n the E*-block. The stored
    basis is orthonormal.
    """

    def __init__(self, n: int, basis):
        self.n = int(n)
        B = np.asarray(basis, dtype=float)
        if B.size == 0:
            B = np.zeros((2 * self.n, 0))
        B = B.reshape(2 * self.n, -1)
        self.basis = orth_basis(B)

    @classmethod
    def graph(cls, M) -> "LinearRelation":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        n = M.shape[0]
        return cls(n, np.vstack([np.eye(n), M]))

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def pairing_form(self) -> np.ndarray:
        """Symmetric matrix S with b'Sb = <x, x*> for b = (x, x*)."""
        return 0.5 * swap_matrix(self.n)

    def restricted_form(self) -> np.ndarray:
        V = self.basis
        return V.T @ self.pairing_form() @ V

    def min_form_eigenvalue(self) -> float:
        if self.dim == 0:
            return 0.0
        return float(np.linalg.eigvalsh(self.restricted_form())[0])

    def is_monotone(self, tol: float = 1e-9) -> bool:
        return self.min_form_eigenvalue() >= -tol

    def contains(self, b, tol: float = RANK_TOL) -> bool:
        b = as_vector(b, 2 * self.n)
        r = b - self.basis @ (self.basis.T @ b)
        return float(np.linalg.norm(r)) <= tol * (1.0 + np.linalg.norm(b))

    def same_span(self, other: "LinearRelation", tol: float = 1e-8) -> bool:
        if self.n != other.n or self.dim != other.dim:
            return False
        P = self.basis @ self.basis.T - other.basis @ other.basis.T
        return float(np.linalg.norm(P)) <= tol

    def as_set(self, space: Optional[SnSpace] = None) -> LinearSubspace:
        return LinearSubspace(space or product_space(self.n), self.basis)

    def to_dict(self) -> dict:
        # column-major: one inner list per basis column
        return {"n": self.n, "basis": self.basis.T.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "LinearRelation":
        try:
            n = int(data["n"])
            cols = np.asarray(data["basis"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed linear relation: {exc}") from exc
        if cols.size == 0:
            return cls(n, np.zeros((2 * n, 0)))
        cols = np.atleast_2d(cols)
        if cols.shape[1] != 2 * n:
            raise ValueError(f"basis columns must have length {2 * n}")
        return cls(n, cols.T)


def polar(A: LinearRelation) -> LinearRelation:
    """A^0 = {b* : <a, b*> = 0 for all a in A}, as a subspace of E* x E**."""
    return LinearRelation(A.n, null_basis(A.basis.T) if A.dim else np.eye(2 * A.n))


def adjoint(A: LinearRelation) -> LinearRelation:
    """A^T = {(y**, y*) : (y*, -y**) in A^0}, with the bidual identified with E."""
    P = polar(A).basis
    n = A.n
    return LinearRelation(n, np.vstack([-P[n:], P[:n]]))


@dataclass
class PolarSup:
    value: float
    quasidense: bool
    direction: Optional[np.ndarray]

    def to_dict(self) -> dict:
        return {"value": self.value, "quasidense": self.quasidense,
                "direction": None if self.direction is None else self.direction.tolist()}


def sup_s_on_polar(A: LinearRelation, tol: float = 1e-9) -> PolarSup:
    """Largest eigenvalue of (x*, x**) -> <x*, x**> on the unit sphere of A^0.

    In the product space s_L equals the duality pairing, so A is quasidense
    exactly when this value is <= 0.
    """
    if not A.is_monotone(tol):
        raise ValueError("relation is not monotone")
    P = polar(A)
    if P.dim == 0:
        return PolarSup(0.0, True, None)
    w, U = np.linalg.eigh(P.restricted_form())
    value = float(w[-1])
    return PolarSup(value, value <= tol, P.basis @ U[:, -1])


@dataclass
class BrezisBrowderReport:
    polar_test: bool
    adjoint_monotone: bool
    adjoint_maximal: bool
    adjoint_maximal_by_dimension: bool
    adjoint_maximal_by_probe: bool
    polar_sup: float
    consistent: bool
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"polar_test": self.polar_test, "adjoint_monotone": self.adjoint_monotone,
                "adjoint_maximal": self.adjoint_maximal,
                "adjoint_maximal_by_dimension": self.adjoint_maximal_by_dimension,
                "adjoint_maximal_by_probe": self.adjoint_maximal_by_probe,
                "polar_sup": self.polar_sup, "consistent": self.consistent, "notes": self.notes}


def extension_candidates(A: LinearRelation, k: int = 8, seed: int = 0) -> np.ndarray:
    """Candidate points for extending a monotone relation: swapped polar
    directions with positive pairing, plus random points."""
    rng = np.random.default_rng(seed)
    P = polar(A)
    cands = []
    if P.dim:
        w, U = np.linalg.eigh(P.restricted_form())
        for i in range(U.shape[1]):
            if w[i] > 1e-9:
                y = P.basis @ U[:, i]
                cands.append(swap_matrix(A.n) @ y)
    cands += list(rng.standard_normal((k, 2 * A.n)))
    return np.array(cands)


def is_maximal_monotone(A: LinearRelation, tol: float = 1e-9) -> tuple[bool, bool]:
    """(by dimension, by extension probing) for a monotone relation."""
    if not A.is_monotone(tol):
        return False, False
    by_dim = A.dim == A.n
    rep = maximality_probe(A.as_set(), extension_candidates(A), tol=tol)
    return by_dim, rep.verdict == "maximal-on-candidates"


def brezis_browder_check(A: LinearRelation, tol: float = 1e-9, strict: bool = True) -> BrezisBrowderReport:
    """Eigen-test on A^0, monotonicity of A^T and maximality of A^T; these are
    equivalent, and a disagreement raises InconsistentVerdicts when strict."""
    ps = sup_s_on_polar(A, tol)
    T = adjoint(A)
    mono = T.is_monotone(tol)
    by_dim, by_probe = is_maximal_monotone(T, tol)
    notes = []
    if by_dim != by_probe:
        notes.append("dimension and probing disagree on maximality of the adjoint")
    maximal = by_dim and by_probe
    consistent = ps.quasidense == mono == maximal and by_dim == by_probe
    rep = BrezisBrowderReport(ps.quasidense, mono, maximal, by_dim, by_probe, ps.value, consistent, notes)
    if strict and not consistent:
        raise InconsistentVerdicts(str(rep.to_dict()))
    return rep


@dataclass
class AffineSet:
    """point + span(basis), or the empty set when point is None."""

    point: Optional[np.ndarray]
    basis: Optional[np.ndarray]

    @property
    def empty(self) -> bool:
        return self.point is None

    def contains(self, v, tol: float = 1e-9) -> bool:
        if self.empty:
            return False
        d = as_vector(v) - self.point
        if self.basis.shape[1]:
            d = d - self.basis @ (self.basis.T @ d)
        return float(np.linalg.norm(d)) <= tol * (1.0 + np.linalg.norm(v))

    def to_dict(self) -> dict:
        if self.empty:
            return {"empty": True}
        return {"empty": False, "point": self.point.tolist(), "basis": self.basis.T.tolist()}


def indicator_quadratic_subdiff(A: LinearRelation, b, tol: float = RANK_TOL) -> AffineSet:
    """Subdifferential of q_L + indicator of A at b: Lb + A^0 if b is in A, else empty."""
    b = as_vector(b, 2 * A.n)
    if not A.contains(b, tol):
        return AffineSet(None, None)
    return AffineSet(swap_matrix(A.n) @ b, polar(A).basis)


def random_monotone_relation(n: int, rng: np.random.Generator, k: Optional[int] = None) -> LinearRelation:
    """A random monotone relation of dimension k (maximal when k = n).

    Uses Minty's parametrization z -> (Jz, z - Jz) with J = (I + N)/2 and
    |N| <= 1, restricted to a random k-dimensional subspace of z.
    """
    k = n if k is None else k
    N = rng.standard_normal((n, n))
    N /= max(np.linalg.norm(N, 2), 1e-12) * rng.uniform(1.0, 1.5)
    if rng.uniform() < 0.2:
        # an eigenvalue of N at -1 makes the relation multivalued
        u = rng.standard_normal(n)
        u /= np.linalg.norm(u)
        P = np.eye(n) - np.outer(u, u)
        N = P @ N @ P - np.outer(u, u)
    J = 0.5 * (np.eye(n) + N)
    Z = rng.standard_normal((n, k))
    return LinearRelation(n, np.vstack([J @ Z, Z - J @ Z]))
