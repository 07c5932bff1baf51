"""Backward pass: implicit differentiation of the ADMM fixed point.

At convergence ``v = Ax + mu`` satisfies ``v = F(v)`` with

    F(v) = A M^{-1} (-p + rho A'(2 clamp(v) - v)) + v - clamp(v),
    M = Q + rho A'A.

Gradients of a loss with respect to ``Q`` and ``p`` come from the implicit
function theorem applied to ``F``; gradients with respect to ``A``, ``l`` and
``u`` are recovered from the KKT stationarity condition.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NotSolved
from .problem import QpProblem
from .solver import SOLVED, Factorization, SolveResult, project

log = logging.getLogger(__name__)

RIDGE = 1e-10
ACTIVE_TOL = 1e-8
SINGULAR_COND = 1e13


@dataclass(frozen=True, eq=False)
class FixedPointData:
    """Everything the backward pass needs from a converged forward solve.

    ``A``, ``l``, ``u`` may carry extra identity rows (infinite bounds) when
    the original ``A`` lacks full column rank.
    """

    v_star: np.ndarray
    proj_mask: np.ndarray
    rho: float
    factor: Factorization
    A: np.ndarray
    l: np.ndarray
    u: np.ndarray


@dataclass(eq=False)
class GradientBundle:
    dQ: np.ndarray
    dp: np.ndarray
    dA: np.ndarray
    dl: np.ndarray
    du: np.ndarray
    d_x: np.ndarray
    d_y: np.ndarray
    d_y_minus: np.ndarray
    d_y_plus: np.ndarray
    approximate: bool = False

    def scaled(self, c: float) -> "GradientBundle":
        return GradientBundle(*(c * getattr(self, f) for f in (
            "dQ", "dp", "dA", "dl", "du", "d_x", "d_y", "d_y_minus", "d_y_plus")),
            approximate=self.approximate)


def projection_jacobian(v, l, u) -> np.ndarray:
    """Diagonal of the clamp derivative: 1 strictly inside ``(l, u)``, else 0."""
    return ((l < v) & (v < u)).astype(float)


def fixed_point_map(v, problem: QpProblem, rho: float, factor: Factorization | None = None):
    """Evaluate ``F(v)`` for the (unscaled) problem."""
    if factor is None:
        factor = Factorization(problem.Q, problem.A, rho)
    pv = project(v, problem.l, problem.u)
    rhs = -problem.p + rho * (problem.A.T @ (2.0 * pv - v))
    return problem.A @ factor.solve(rhs) + v - pv


def _full_column_rank(A: np.ndarray) -> bool:
    n = A.shape[1]
    return A.shape[0] >= n and np.linalg.matrix_rank(A) == n


def _backward_rows(problem: QpProblem):
    """``(A, l, u, augmented)``: identity rows are appended unless ``A`` has full column rank."""
    A, l, u = problem.A, problem.l, problem.u
    if _full_column_rank(A):
        return A, l, u, False
    n = problem.n
    return (np.vstack([A, np.eye(n)]), np.concatenate([l, np.full(n, -np.inf)]),
            np.concatenate([u, np.full(n, np.inf)]), True)


def backward_factor(problem: QpProblem, rho: float = 1.0) -> Factorization:
    """Factorization reusable by :func:`backward` for every problem sharing ``(Q, A)``."""
    A = _backward_rows(problem)[0]
    return Factorization(problem.Q, A, rho)


def fixed_point_data(result: SolveResult, problem: QpProblem, rho: float | None = None,
                     factor: Factorization | None = None) -> FixedPointData:
    """Rebuild the fixed point ``v* = z* + y*/rho`` in unscaled coordinates.

    ``factor`` may be passed in to reuse an existing factorization (see
    :func:`backward_factor`) for the same ``rho``.
    """
    rho = float(result.rho_final if rho is None else rho)
    A, l, u, augmented = _backward_rows(problem)
    z, y = result.z, result.y
    if augmented:
        z = np.concatenate([z, result.x])
        y = np.concatenate([y, np.zeros(problem.n)])
    if factor is None or factor.rho != rho or factor.sigma or factor.rows != A.shape[0]:
        factor = Factorization(problem.Q, A, rho)
    v = z + y / rho
    return FixedPointData(v, projection_jacobian(v, l, u), rho, factor, A, l, u)


def compute_dx(fp: FixedPointData, problem: QpProblem, grad_x) -> tuple[np.ndarray, bool]:
    """Return ``(d_x, approximate)`` where ``d_x`` is the loss gradient w.r.t. ``p``.

    ``approximate`` is set when ``I - dF/dv`` was numerically singular and
    the adjoint system had to be solved in the least-squares sense.
    """
    g = np.asarray(grad_x, dtype=float)
    A, mask, rho = fp.A, fp.proj_mask, fp.rho
    m = A.shape[0]
    minv_at = fp.factor.solve(A.T)
    G = rho * (A @ minv_at)
    # I - dF/dv = diag(mask) - rho A M^{-1} A' (2 diag(mask) - I)
    K = np.diag(mask) - G * (2.0 * mask - 1.0)[None, :]

    ata = A.T @ A
    try:
        cho = scipy.linalg.cho_factor(ata, check_finite=False)
    except np.linalg.LinAlgError:
        cho = scipy.linalg.cho_factor(ata + RIDGE * np.eye(ata.shape[0]), check_finite=False)
    w = mask * (A @ scipy.linalg.cho_solve(cho, g, check_finite=False))

    approximate = False
    if m and np.linalg.cond(K) > SINGULAR_COND:
        log.warning("implicit system is numerically singular; using least squares")
        s = np.linalg.lstsq(K.T, w, rcond=None)[0]
        approximate = True
    else:
        s = np.linalg.solve(K.T, w) if m else w
    return -(minv_at @ s), approximate


def grad_objective(d_x, x_star):
    """Return ``(dQ, dp)``; ``dQ`` is exactly symmetric."""
    outer = np.outer(d_x, x_star)
    dQ = 0.5 * (outer + outer.T)
    return dQ, np.array(d_x, dtype=float)


def grad_constraints(d_x, grad_x, result: SolveResult, problem: QpProblem,
                     tol: float = ACTIVE_TOL):
    """Return ``(dA, dl, du, d_y, d_y_minus, d_y_plus)``.

    ``d_y`` is the minimum-norm least-squares solution of
    ``A' d_y = -grad_x - Q d_x`` supported on the active constraints
    (``|y_i| > tol``); inactive entries are zero.
    """
    g = np.asarray(grad_x, dtype=float)
    x, y = result.x, result.y
    y_minus = np.minimum(y, 0.0)
    y_plus = np.maximum(y, 0.0)
    lower = y_minus < -tol
    upper = y_plus > tol
    active = lower | upper

    rhs = -g - problem.Q @ d_x
    d_y = np.zeros(problem.m)
    if active.any():
        d_y[active] = np.linalg.lstsq(problem.A[active].T, rhs, rcond=None)[0]

    d_y_minus = np.zeros_like(d_y)
    d_y_plus = np.zeros_like(d_y)
    d_y_minus[lower] = d_y[lower] / y_minus[lower]
    d_y_plus[upper] = d_y[upper] / y_plus[upper]

    dl = -y_minus * d_y_minus
    du = -y_plus * d_y_plus
    dA = np.outer(d_y, x) + np.outer(y, d_x)
    return dA, dl, du, d_y, d_y_minus, d_y_plus


def backward(result: SolveResult, problem: QpProblem, grad_x,
             factor: Factorization | None = None, rho: float | None = None) -> GradientBundle:
    """Map an upstream gradient ``dl/dx*`` to gradients w.r.t. ``(Q, p, A, l, u)``.

    Works on the unscaled problem at the final ``rho`` of the forward solve.
    Any positive ``rho`` yields the same gradients, so callers differentiating
    many solves of one ``(Q, A)`` may pass a shared ``factor`` (its ``rho``
    is then used).
    """
    if result.status != SOLVED:
        raise NotSolved(result.status)
    grad_x = np.asarray(grad_x, dtype=float)
    if grad_x.shape != (problem.n,):
        raise ValueError(f"grad_x must have shape ({problem.n},), got {grad_x.shape}")
    if rho is None and factor is not None:
        rho = factor.rho
    fp = fixed_point_data(result, problem, rho=rho, factor=factor)
    d_x, approximate = compute_dx(fp, problem, grad_x)
    dQ, dp = grad_objective(d_x, result.x)
    dA, dl, du, d_y, d_ym, d_yp = grad_constraints(d_x, grad_x, result, problem)
    return GradientBundle(dQ, dp, dA, dl, du, d_x, d_y, d_ym, d_yp, approximate)
