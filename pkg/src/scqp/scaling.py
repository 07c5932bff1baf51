"""Diagonal equilibration of the problem data and step-size (rho) selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import QpProblem

BETA_AUTO_SPREAD = 1e3
BETA_AUTO_VALUE = 0.5


@dataclass(frozen=True, eq=False)
class ScalingData:
    """Diagonals of ``D`` (length n) and ``E`` (length m) and the shrinkage used."""

    D: np.ndarray
    E: np.ndarray
    beta_used: float

    @classmethod
    def identity(cls, n: int, m: int) -> "ScalingData":
        return cls(np.ones(n), np.ones(m), 0.0)


def _row_inf_norms(M: np.ndarray) -> np.ndarray:
    if M.shape[1] == 0:
        return np.zeros(M.shape[0])
    return np.max(np.abs(M), axis=1)


def compute_scaling(Q: np.ndarray, A: np.ndarray, beta: float | None = None) -> ScalingData:
    """Equilibrate ``Q`` to unit row norms and then normalize the rows of ``AD``.

    ``d_i = ||Q_i||_inf^{-1/2}`` shrunk towards its mean by ``beta``; ``E``
    holds the reciprocal row infinity-norms of ``AD`` so that every nonzero
    row of ``EAD`` has unit infinity-norm. Zero rows get neutral factors.
    ``beta=None`` picks 0 unless the spread of ``d`` exceeds 1e3, then 0.5.
    """
    qn = _row_inf_norms(Q)
    nz = qn > 0
    d = np.empty(Q.shape[0])
    d[nz] = qn[nz] ** -0.5
    d[~nz] = d[nz].mean() if nz.any() else 1.0

    if beta is None:
        beta = BETA_AUTO_VALUE if d.max() / d.min() > BETA_AUTO_SPREAD else 0.0
    D = (1.0 - beta) * d + beta * d.mean()

    an = _row_inf_norms(A * D)
    E = np.ones(A.shape[0])
    E[an > 0] = 1.0 / an[an > 0]
    return ScalingData(D, E, float(beta))


def scale_problem(problem: QpProblem, s: ScalingData) -> QpProblem:
    """Return ``(DQD, Dp, EAD, El, Eu)``. Infinite bounds stay infinite."""
    D, E = s.D, s.E
    return QpProblem(
        D[:, None] * problem.Q * D[None, :],
        D * problem.p,
        E[:, None] * problem.A * D[None, :],
        E * problem.l,
        E * problem.u,
    )


def unscale_solution(x_bar, z_bar, y_bar, s: ScalingData):
    """Map scaled iterates back: ``x = D x_bar``, ``z = z_bar / E``, ``y = E y_bar``."""
    return s.D * x_bar, z_bar / s.E, s.E * y_bar


def scale_iterates(x, z, y, s: ScalingData):
    """Inverse of :func:`unscale_solution`."""
    return x / s.D, s.E * z, y / s.E


def initial_rho(Q_bar: np.ndarray, A_bar: np.ndarray, rho_min: float = 1e-6,
                rho_max: float = 1e6) -> float:
    """``sqrt(m/n) * ||Q_bar||_F / ||A_bar' A_bar||_F`` clamped to [rho_min, rho_max].

    Falls back to 1 when ``A_bar`` is identically zero.
    """
    m, n = A_bar.shape
    ata = np.linalg.norm(A_bar.T @ A_bar, "fro")
    if ata == 0.0 or n == 0:
        rho = 1.0
    else:
        rho = np.sqrt(m / n) * np.linalg.norm(Q_bar, "fro") / ata
    return float(np.clip(rho, rho_min, rho_max))


@dataclass
class RhoState:
    rho: float
    refactor_count: int = 0
    last_update_iter: int = 0


def relative_residuals(r_prim_norm: float, r_dual_norm: float, scale_refs) -> tuple[float, float]:
    """Normalize residual norms by ``max(|Ax|,|z|)`` and ``max(|Qx|,|A'y|,|p|)``.

    ``scale_refs`` is ``(|Ax|, |z|, |Qx|, |A'y|, |p|)`` in infinity-norms.
    """
    ax, z, qx, aty, p = scale_refs
    tiny = np.finfo(float).tiny
    return r_prim_norm / max(ax, z, tiny), r_dual_norm / max(qx, aty, p, tiny)


def adaptive_rho_update(state: RhoState, r_prim_norm: float, r_dual_norm: float, scale_refs,
                        tol: float, rho_min: float, rho_max: float,
                        iteration: int = 0) -> tuple[RhoState, bool]:
    """Propose ``rho * sqrt(rel_prim / rel_dual)`` and accept it past the ``tol`` gate.

    Returns the (possibly unchanged) state and whether a refactorization is needed.
    """
    rel_prim, rel_dual = relative_residuals(r_prim_norm, r_dual_norm, scale_refs)
    if rel_prim == 0.0 or rel_dual == 0.0:
        return state, False
    candidate = float(np.clip(state.rho * np.sqrt(rel_prim / rel_dual), rho_min, rho_max))
    ratio = candidate / state.rho
    if ratio >= tol or 1.0 / ratio >= tol:
        return RhoState(candidate, state.refactor_count + 1, iteration), True
    return state, False
