"""QP data model, control parameters and random problem generators.

Problems have the form::

    minimize    1/2 x'Qx + p'x
    subject to  l <= Ax <= u

with dense ``Q`` (n x n), ``A`` (m x n) and extended-real bounds.  Infinite
bounds are stored as IEEE infinities.
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field, fields
from typing import Any, Mapping, Optional

import numpy as np

from .errors import BoundOrderViolation, DimensionMismatch, NonFiniteEntry, ValidationError

SYMMETRY_TOL = 1e-10
ASYMMETRY_WARN = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QpProblem:
    Q: np.ndarray
    p: np.ndarray
    A: np.ndarray
    l: np.ndarray
    u: np.ndarray

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x + self.p @ x)

    def replace(self, **changes) -> "QpProblem":
        return validate(dataclasses.replace(self, **changes))

    def copy(self) -> "QpProblem":
        return QpProblem(*(np.array(getattr(self, f.name)) for f in fields(self)))


def validate(problem: QpProblem) -> QpProblem:
    """Check shapes, finiteness and bound order; symmetrize ``Q``.

    Returns a new read-only problem with float64 arrays. ``Q`` is replaced by
    ``(Q + Q')/2``; a relative asymmetry above 1e-6 triggers a warning.
    """
    Q = np.array(problem.Q, dtype=float, ndmin=2)
    p = np.array(problem.p, dtype=float).reshape(-1)
    A = np.array(problem.A, dtype=float)
    l = np.array(problem.l, dtype=float).reshape(-1)
    u = np.array(problem.u, dtype=float).reshape(-1)
    if A.ndim == 1:
        A = A.reshape(1, -1) if A.size else np.zeros((0, Q.shape[1]))

    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DimensionMismatch(f"Q must be square, got shape {Q.shape}")
    n = Q.shape[0]
    if p.shape != (n,):
        raise DimensionMismatch(f"p has length {p.size}, expected {n}")
    if A.ndim != 2 or A.shape[1] != n:
        raise DimensionMismatch(f"A has shape {A.shape}, expected (m, {n})")
    m = A.shape[0]
    if l.shape != (m,) or u.shape != (m,):
        raise DimensionMismatch(f"l, u have lengths {l.size}, {u.size}, expected {m}")

    for name, arr in (("Q", Q), ("p", p), ("A", A)):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteEntry(f"{name} contains NaN or infinite entries")
    if np.any(np.isnan(l)) or np.any(np.isnan(u)):
        raise NonFiniteEntry("bounds contain NaN")
    if np.any(l == np.inf) or np.any(u == -np.inf):
        raise BoundOrderViolation("lower bounds must be < +inf and upper bounds > -inf")
    bad = np.flatnonzero(l > u)
    if bad.size:
        raise BoundOrderViolation(f"l > u at rows {bad.tolist()}")

    asym = np.max(np.abs(Q - Q.T)) if n else 0.0
    if asym > SYMMETRY_TOL:
        scale = max(np.max(np.abs(Q)), 1.0)
        if asym / scale > ASYMMETRY_WARN:
            warnings.warn(f"Q is not symmetric (max |Q - Q'| = {asym:.3g}); using (Q + Q')/2",
                          stacklevel=2)
        Q = 0.5 * (Q + Q.T)

    return QpProblem(_frozen(Q), _frozen(p), _frozen(A), _frozen(l), _frozen(u))


def augment_full_rank(problem: QpProblem) -> QpProblem:
    """Stack an identity block under ``A`` with infinite bounds.

    The extra rows never bind, but ``Q + rho*A'A`` becomes positive definite
    for any PSD ``Q``.
    """
    n = problem.n
    return validate(QpProblem(
        problem.Q,
        problem.p,
        np.vstack([problem.A, np.eye(n)]),
        np.concatenate([problem.l, np.full(n, -np.inf)]),
        np.concatenate([problem.u, np.full(n, np.inf)]),
    ))


@dataclass(frozen=True)
class Settings:
    """Solver control parameters. ``rho=None`` and ``beta=None`` mean automatic."""

    max_iters: int = 10_000
    eps_abs: float = 1e-3
    eps_rel: float = 1e-3
    eps_infeas: float = 1e-4
    check_solved: int = 25
    check_feasible: int = 25
    alpha: float = 1.2
    alpha_iter: int = 100
    rho: Optional[float] = None
    rho_min: float = 1e-6
    rho_max: float = 1e6
    adaptive_rho: bool = True
    adaptive_rho_tol: float = 10.0
    adaptive_rho_iter: int = 50
    adaptive_rho_max_iter: int = 1000
    sigma: float = 0.0
    scale: bool = True
    beta: Optional[float] = None

    def __post_init__(self):
        for name in ("max_iters", "check_solved", "check_feasible", "alpha_iter",
                     "adaptive_rho_iter", "adaptive_rho_max_iter"):
            value = getattr(self, name)
            if isinstance(value, bool) or float(value) != int(value) or value < 0:
                raise ValidationError(f"{name} must be a non-negative integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.check_solved < 1 or self.check_feasible < 1:
            raise ValidationError("check intervals must be >= 1")
        for name in ("eps_abs", "eps_rel", "eps_infeas", "sigma"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"{name} must be non-negative")
        if not 0 < self.alpha < 2:
            raise ValidationError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not 0 < self.rho_min <= self.rho_max:
            raise ValidationError("need 0 < rho_min <= rho_max")
        if self.rho is not None and not self.rho_min <= self.rho <= self.rho_max:
            raise ValidationError(f"rho={self.rho} outside [{self.rho_min}, {self.rho_max}]")
        if not self.adaptive_rho_tol > 1:
            raise ValidationError("adaptive_rho_tol must be > 1")
        if self.beta is not None and not 0 <= self.beta <= 1:
            raise ValidationError(f"beta must lie in [0, 1], got {self.beta}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Settings":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValidationError(f"unknown settings keys: {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "Settings":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------- generators

def _random_objective(rng: np.random.Generator, n: int):
    L = rng.standard_normal((n, n)) * (rng.random((n, n)) < 0.5)
    Q = L.T @ L + 0.01 * np.eye(n)
    p = rng.standard_normal(n)
    return Q, p


def generate_random_box_qp(n: int, seed: int) -> QpProblem:
    """Random box-constrained QP: ``A = I``, ``l ~ U(-2,-1)``, ``u ~ U(1,2)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    Q, p = _random_objective(rng, n)
    l = rng.uniform(-2.0, -1.0, n)
    u = rng.uniform(1.0, 2.0, n)
    return validate(QpProblem(Q, p, np.eye(n), l, u))


def generate_random_qp(n: int, m: int, seed: int) -> QpProblem:
    """Random inequality-constrained QP with a 15%-dense Gaussian ``A``.

    Bounds straddle zero (``l ~ U(-1,0)``, ``u ~ U(0,1)``) so ``x = 0`` is
    always feasible.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    rng = np.random.default_rng(seed)
    Q, p = _random_objective(rng, n)
    A = rng.standard_normal((m, n)) * (rng.random((m, n)) < 0.15)
    l = rng.uniform(-1.0, 0.0, m)
    u = rng.uniform(0.0, 1.0, m)
    return validate(QpProblem(Q, p, A, l, u))
