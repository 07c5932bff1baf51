"""ADMM forward solver.

Splits ``l <= Ax <= u`` through an auxiliary ``z = Ax`` and iterates, in the
equilibrated problem space,

    x+ = alpha * M^{-1} (sigma x - p + rho A'(z - mu)) + (1 - alpha) x
    z+ = clamp(A x+ + mu, l, u)
    mu+ = mu + A x+ - z+

with ``M = Q + sigma I + rho A'A`` factorized once per value of ``rho``.
Termination and infeasibility tests run on unscaled quantities.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import FactorizationFailure, NonFiniteIterate
from .problem import QpProblem, Settings
from .scaling import (RhoState, ScalingData, adaptive_rho_update, compute_scaling, initial_rho,
                      scale_iterates, scale_problem, unscale_solution)

log = logging.getLogger(__name__)

SOLVED = "solved"
MAX_ITERS_REACHED = "max_iters_reached"
PRIMAL_INFEASIBLE = "primal_infeasible"
DUAL_INFEASIBLE = "dual_infeasible"
STATUSES = (SOLVED, MAX_ITERS_REACHED, PRIMAL_INFEASIBLE, DUAL_INFEASIBLE)

FACTOR_RETRY_SHIFT = 1e-8


class Factorization:
    """Cholesky factorization of ``M = Q + sigma I + rho A'A``."""

    def __init__(self, Q: np.ndarray, A: np.ndarray, rho: float, sigma: float = 0.0):
        n = Q.shape[0]
        M = Q + rho * (A.T @ A)
        if sigma:
            M = M + sigma * np.eye(n)
        self.rho = rho
        self.sigma = sigma
        self.rows = A.shape[0]
        self.matrix = M
        try:
            self._c, _ = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            log.debug("Cholesky failed, retrying with a %g diagonal shift", FACTOR_RETRY_SHIFT)
            try:
                self._c, _ = scipy.linalg.cho_factor(M + FACTOR_RETRY_SHIFT * np.eye(n),
                                                     lower=True, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise FactorizationFailure(
                    "Q + sigma*I + rho*A'A is not positive definite; Q may be indefinite, "
                    "or set sigma > 0 for a semidefinite Q") from exc
        self._potrs, = scipy.linalg.get_lapack_funcs(("potrs",), (self._c,))

    def solve(self, b: np.ndarray) -> np.ndarray:
        x, info = self._potrs(self._c, b, lower=1)
        if info != 0:
            raise FactorizationFailure(f"triangular solve failed (info={info})")
        return x


def factorize(Q: np.ndarray, A: np.ndarray, rho: float, sigma: float = 0.0) -> Factorization:
    return Factorization(Q, A, rho, sigma)


def project(v: np.ndarray, l: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(v, l), u)


def residuals(problem: QpProblem, x, z, y):
    """Primal ``Ax - z`` and dual ``Qx + p + A'y`` residual vectors."""
    return problem.A @ x - z, problem.Q @ x + problem.p + problem.A.T @ y


def _inf(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def scale_refs(problem: QpProblem, x, z, y):
    """Infinity norms ``(|Ax|, |z|, |Qx|, |A'y|, |p|)`` used by tolerances and rho updates."""
    return (_inf(problem.A @ x), _inf(z), _inf(problem.Q @ x), _inf(problem.A.T @ y),
            _inf(problem.p))


def check_termination(r_prim, r_dual, problem: QpProblem, x, z, y, settings: Settings):
    """Return ``(solved, eps_prim, eps_dual)`` for the absolute/relative stopping rule."""
    ax, zn, qx, aty, pn = scale_refs(problem, x, z, y)
    eps_prim = settings.eps_abs + settings.eps_rel * max(ax, zn)
    eps_dual = settings.eps_abs + settings.eps_rel * max(qx, aty, pn)
    solved = _inf(r_prim) <= eps_prim and _inf(r_dual) <= eps_dual
    return solved, eps_prim, eps_dual


def _support(bound: np.ndarray, weight: np.ndarray) -> float:
    # infinite bound times a zero weight contributes nothing
    active = weight != 0
    return float(bound[active] @ weight[active]) if active.any() else 0.0


def check_primal_infeasible(delta_y, A, l, u, eps) -> bool:
    """Certificate test ``|A'dy| <= eps|dy|`` and ``u'dy+ + l'dy- <= eps|dy|``."""
    norm = _inf(delta_y)
    if norm == 0.0:
        return False
    if _inf(A.T @ delta_y) > eps * norm:
        return False
    pos = np.maximum(delta_y, 0.0)
    neg = np.minimum(delta_y, 0.0)
    return _support(u, pos) + _support(l, neg) <= eps * norm


def check_dual_infeasible(delta_x, Q, p, A, l, u, eps) -> bool:
    """Certificate test for an unbounded descent direction ``dx``.

    ``dx`` must be a recession direction of the objective (``Q dx ~ 0``),
    strictly decrease it (``p'dx < -eps|dx|``) and keep ``A dx`` in the
    recession cone of ``[l, u]``.
    """
    norm = _inf(delta_x)
    if norm == 0.0:
        return False
    tol = eps * norm
    if _inf(Q @ delta_x) > tol:
        return False
    if not p @ delta_x < -tol:
        return False
    adx = A @ delta_x
    lo_fin = np.isfinite(l)
    hi_fin = np.isfinite(u)
    both = lo_fin & hi_fin
    if np.any(np.abs(adx[both]) > tol):
        return False
    # only lower bound finite: may grow upwards
    if np.any(adx[lo_fin & ~hi_fin] < -tol):
        return False
    # only upper bound finite: may grow downwards
    if np.any(adx[~lo_fin & hi_fin] > tol):
        return False
    return True


@dataclass
class SolverState:
    """Scaled iterates; ``y = rho * mu`` at every step."""

    x: np.ndarray
    z: np.ndarray
    mu: np.ndarray
    v: np.ndarray
    factor: Factorization
    rho_state: RhoState
    iter: int = 0
    prev_x: Optional[np.ndarray] = None
    prev_mu: Optional[np.ndarray] = None

    @property
    def rho(self) -> float:
        return self.rho_state.rho

    @property
    def y(self) -> np.ndarray:
        return self.rho * self.mu

    @property
    def delta_x(self) -> np.ndarray:
        return self.x - self.prev_x

    @property
    def delta_y(self) -> np.ndarray:
        return self.rho * (self.mu - self.prev_mu)


def x_update(state: SolverState, problem: QpProblem, alpha: float) -> np.ndarray:
    rho = state.rho
    rhs = -problem.p + rho * (problem.A.T @ (state.z - state.mu))
    if state.factor.sigma:
        rhs = rhs + state.factor.sigma * state.x
    x_tilde = state.factor.solve(rhs)
    return alpha * x_tilde + (1.0 - alpha) * state.x


def iterate(state: SolverState, problem: QpProblem, settings: Settings) -> SolverState:
    """One ADMM step on (already scaled) ``problem``; updates ``state`` in place."""
    alpha = 1.0 if state.iter < settings.alpha_iter else settings.alpha
    x = x_update(state, problem, alpha)
    v = problem.A @ x + state.mu
    z = project(v, problem.l, problem.u)
    mu = v - z
    if not np.isfinite(x.sum() + mu.sum()):
        raise NonFiniteIterate(f"non-finite iterate at iteration {state.iter + 1}")
    state.prev_x, state.prev_mu = state.x, state.mu
    state.x, state.z, state.mu, state.v = x, z, mu, v
    state.iter += 1
    return state


@dataclass(eq=False)
class SolveResult:
    status: str
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray
    iterations: int
    r_prim: float
    r_dual: float
    refactor_count: int
    v_star: np.ndarray
    rho_final: float
    scaling: ScalingData
    solve_time_ms: float = 0.0
    eps_prim: float = float("nan")
    eps_dual: float = float("nan")
    history: list = field(default_factory=list)

    @property
    def solved(self) -> bool:
        return self.status == SOLVED

    @property
    def is_certificate(self) -> bool:
        """True when x/y hold an infeasibility certificate rather than a solution."""
        return self.status in (PRIMAL_INFEASIBLE, DUAL_INFEASIBLE)


def solve(problem: QpProblem, settings: Settings | None = None, x0=None, z0=None,
          y0=None) -> SolveResult:
    """Solve a validated QP.

    The problem is equilibrated when ``settings.scale`` is set, ``rho`` comes
    from :func:`scqp.scaling.initial_rho` unless fixed, and the iteration
    starts from ``x = 0, z = clamp(0), y = 0`` unless initial iterates are given.
    """
    settings = settings or Settings()
    t0 = time.perf_counter()
    n, m = problem.n, problem.m

    if settings.scale:
        scaling = compute_scaling(problem.Q, problem.A, settings.beta)
    else:
        scaling = ScalingData.identity(n, m)
    sp = scale_problem(problem, scaling)

    if settings.rho is not None:
        rho = float(settings.rho)
    else:
        rho = initial_rho(sp.Q, sp.A, settings.rho_min, settings.rho_max)
    rho_state = RhoState(rho, refactor_count=1)
    factor = factorize(sp.Q, sp.A, rho, settings.sigma)

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    y = np.zeros(m) if y0 is None else np.asarray(y0, dtype=float)
    z = project(np.zeros(m), problem.l, problem.u) if z0 is None else np.asarray(z0, dtype=float)
    xs, zs, ys = scale_iterates(x, z, y, scaling)
    zs = project(zs, sp.l, sp.u)
    state = SolverState(xs, zs, ys / rho, zs + ys / rho, factor, rho_state)

    status = MAX_ITERS_REACHED
    pinf_streak = dinf_streak = 0
    r_prim = r_dual = np.full(1, np.inf)
    eps_prim = eps_dual = float("nan")
    history = []

    while state.iter < settings.max_iters:
        iterate(state, sp, settings)
        k = state.iter
        last = k == settings.max_iters

        if k % settings.check_feasible == 0:
            dx = scaling.D * state.delta_x
            dy = scaling.E * state.delta_y
            pinf = check_primal_infeasible(dy, problem.A, problem.l, problem.u,
                                           settings.eps_infeas)
            dinf = check_dual_infeasible(dx, problem.Q, problem.p, problem.A, problem.l,
                                         problem.u, settings.eps_infeas)
            pinf_streak = pinf_streak + 1 if pinf else 0
            dinf_streak = dinf_streak + 1 if dinf else 0
            if pinf_streak >= 2:
                status = PRIMAL_INFEASIBLE
                break
            if dinf_streak >= 2:
                status = DUAL_INFEASIBLE
                break

        if k % settings.check_solved == 0 or last:
            xu, zu, yu = unscale_solution(state.x, state.z, state.y, scaling)
            r_prim, r_dual = residuals(problem, xu, zu, yu)
            done, eps_prim, eps_dual = check_termination(r_prim, r_dual, problem, xu, zu, yu,
                                                         settings)
            history.append((k, _inf(r_prim), _inf(r_dual), state.rho))
            if done:
                status = SOLVED
                break
            if (settings.adaptive_rho
                    and settings.adaptive_rho_iter <= k <= settings.adaptive_rho_max_iter):
                refs = scale_refs(problem, xu, zu, yu)
                new_state, refactor = adaptive_rho_update(
                    state.rho_state, _inf(r_prim), _inf(r_dual), refs,
                    settings.adaptive_rho_tol, settings.rho_min, settings.rho_max, k)
                if refactor:
                    # keep y fixed across the change of rho
                    ratio = state.rho / new_state.rho
                    state.mu = state.mu * ratio
                    state.prev_mu = state.prev_mu * ratio
                    state.rho_state = new_state
                    state.factor = factorize(sp.Q, sp.A, new_state.rho, settings.sigma)
                    log.debug("iter %d: rho -> %.3g", k, new_state.rho)

    xu, zu, yu = unscale_solution(state.x, state.z, state.y, scaling)
    if status != SOLVED:
        r_prim, r_dual = residuals(problem, xu, zu, yu)
    # certificates replace the diverging iterate
    if status == PRIMAL_INFEASIBLE:
        yu = scaling.E * state.delta_y
    elif status == DUAL_INFEASIBLE:
        xu = scaling.D * state.delta_x

    return SolveResult(
        status=status,
        x=xu,
        z=zu,
        y=yu,
        iterations=state.iter,
        r_prim=_inf(r_prim),
        r_dual=_inf(r_dual),
        refactor_count=state.rho_state.refactor_count,
        v_star=zu + yu / state.rho,
        rho_final=state.rho,
        scaling=scaling,
        solve_time_ms=1e3 * (time.perf_counter() - t0),
        eps_prim=eps_prim,
        eps_dual=eps_dual,
        history=history,
    )
