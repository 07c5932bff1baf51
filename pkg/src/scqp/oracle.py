"""Independent reference computations for testing.

Nothing here is used by the solver or the backward pass.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import OracleInfeasible, PerturbationInfeasible, TooLarge
from .problem import QpProblem

MAX_ORACLE_M = 16
CHUNK = 4096
FEAS_TOL = 1e-9

INACTIVE, LOWER, UPPER = 0, 1, 2


@dataclass(frozen=True, eq=False)
class OracleSolution:
    x: np.ndarray
    y: np.ndarray
    active_lower: frozenset
    active_upper: frozenset
    objective: float
    skipped: int = 0

    @property
    def pattern(self) -> tuple:
        m = self.y.size
        return tuple(LOWER if i in self.active_lower else UPPER if i in self.active_upper
                     else INACTIVE for i in range(m))


def kkt_residual(problem: QpProblem, x, y):
    """Return ``(stationarity, comp_lower, comp_upper, feas_violation)`` with ``z = Ax``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ax = problem.A @ x
    stationarity = problem.Q @ x + problem.p + problem.A.T @ y
    fl = np.isfinite(problem.l)
    fu = np.isfinite(problem.u)
    comp_lower = abs(float(np.minimum(y, 0.0)[fl] @ (ax - problem.l)[fl]))
    comp_upper = abs(float(np.maximum(y, 0.0)[fu] @ (ax - problem.u)[fu]))
    viol = np.concatenate([[0.0], problem.l - ax, ax - problem.u])
    return stationarity, comp_lower, comp_upper, float(np.max(viol))


def _states(problem: QpProblem):
    """Admissible states per constraint (bounds at infinity cannot be active)."""
    out = []
    for lo, hi in zip(problem.l, problem.u):
        if lo == hi:
            out.append((LOWER,))
            continue
        s = [INACTIVE]
        if np.isfinite(lo):
            s.append(LOWER)
        if np.isfinite(hi):
            s.append(UPPER)
        out.append(tuple(s))
    return out


def _solve_patterns(problem: QpProblem, patterns: np.ndarray):
    """Solve the equality-constrained KKT system for a batch of active patterns.

    Each system is ``[[Q, A'], [S A, I - S]] [x; y] = [-p; S b]`` with ``S``
    the active indicator, so inactive multipliers are pinned at zero and all
    systems share one size. Returns ``(x, y, ok)``.
    """
    n, m = problem.n, problem.m
    k = patterns.shape[0]
    S = (patterns != INACTIVE).astype(float)
    b = np.where(patterns == UPPER, problem.u, np.where(patterns == LOWER, problem.l, 0.0))
    b = np.where(S > 0, b, 0.0)

    K = np.zeros((k, n + m, n + m))
    K[:, :n, :n] = problem.Q
    K[:, :n, n:] = problem.A.T
    K[:, n:, :n] = S[:, :, None] * problem.A[None]
    K[:, n:, n:] = np.eye(m)[None] * (1.0 - S)[:, None, :]
    rhs = np.concatenate([np.broadcast_to(-problem.p, (k, n)), b], axis=1)

    ok = np.ones(k, dtype=bool)
    sol = np.zeros((k, n + m))
    try:
        sol = np.linalg.solve(K, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        for i in range(k):
            try:
                sol[i] = np.linalg.solve(K[i], rhs[i])
            except np.linalg.LinAlgError:
                ok[i] = False
    ok &= np.all(np.isfinite(sol), axis=1)
    return sol[:, :n], sol[:, n:], ok


def _admissible(problem: QpProblem, patterns, x, y, ok, tol):
    ax = x @ problem.A.T
    scale = 1.0 + np.abs(ax)
    feasible = np.all((ax >= problem.l - tol * scale) & (ax <= problem.u + tol * scale), axis=1)
    yscale = tol * (1.0 + np.max(np.abs(y), axis=1, keepdims=True))
    eq = (problem.l == problem.u)[None, :]
    signs = np.where(patterns == LOWER, (y <= yscale) | eq,
                     np.where(patterns == UPPER, y >= -yscale, True))
    return ok & feasible & np.all(signs, axis=1)


def _to_solution(problem, pattern, x, y, skipped=0) -> OracleSolution:
    pattern = np.asarray(pattern)
    return OracleSolution(
        x=x, y=y,
        active_lower=frozenset(np.flatnonzero(pattern == LOWER).tolist()),
        active_upper=frozenset(np.flatnonzero(pattern == UPPER).tolist()),
        objective=problem.objective(x),
        skipped=skipped,
    )


def admissible_candidates(problem: QpProblem, tol: float = FEAS_TOL):
    """Yield ``(pattern, x, y)`` for every active set passing the KKT filters.

    The count of skipped (singular) candidates is available as the
    generator's return value.
    """
    skipped = 0
    it = itertools.product(*_states(problem))
    while True:
        chunk = list(itertools.islice(it, CHUNK))
        if not chunk:
            return skipped
        pats = np.array(chunk, dtype=int).reshape(len(chunk), problem.m)
        x, y, ok = _solve_patterns(problem, pats)
        skipped += int(np.count_nonzero(~ok))
        for i in np.flatnonzero(_admissible(problem, pats, x, y, ok, tol)):
            yield pats[i], x[i], y[i]


def solve_active_set_bruteforce(problem: QpProblem, hint: Optional[Sequence[int]] = None,
                                tol: float = FEAS_TOL) -> OracleSolution:
    """Exact QP solution by enumerating every active set (3^m candidates).

    Requires positive definite ``Q``; enumeration is capped at ``m <= 16``.
    If ``hint`` (a pattern of 0/1/2 per constraint) already satisfies the KKT
    filters it is returned directly, for any ``m``: with strictly convex
    ``Q`` any KKT point is the unique optimum.
    """
    if hint is not None:
        pat = np.asarray(hint, dtype=int)[None, :]
        x, y, ok = _solve_patterns(problem, pat)
        if _admissible(problem, pat, x, y, ok, tol)[0]:
            return _to_solution(problem, pat[0], x[0], y[0])

    if problem.m > MAX_ORACLE_M:
        raise TooLarge(f"m={problem.m} exceeds the enumeration cap of {MAX_ORACLE_M}")

    best = None
    gen = admissible_candidates(problem, tol)
    skipped = 0
    while True:
        try:
            pat, x, y = next(gen)
        except StopIteration as stop:
            skipped = stop.value or 0
            break
        obj = problem.objective(x)
        if best is None or obj < best[0]:
            best = (obj, pat, x, y)
    if best is None:
        raise OracleInfeasible("no active set satisfies the KKT conditions")
    return _to_solution(problem, best[1], best[2], best[3], skipped)


def pattern_from_multipliers(y, tol: float = 1e-6) -> tuple:
    """Active-set pattern read off approximate multipliers (for use as a hint)."""
    y = np.asarray(y)
    return tuple(np.where(y > tol, UPPER, np.where(y < -tol, LOWER, INACTIVE)).tolist())


def quadratic_loss(x_target) -> Callable[[np.ndarray], float]:
    """``l(x) = 1/2 |x - x_target|^2``; its gradient at ``x`` is ``x - x_target``."""
    t = np.asarray(x_target, dtype=float)
    return lambda x: 0.5 * float(np.sum((x - t) ** 2))


def _oracle_x(problem: QpProblem, hint=None) -> np.ndarray:
    return solve_active_set_bruteforce(problem, hint=hint).x


PARAMS = ("Q", "p", "A", "l", "u")


def finite_diff_grad(problem: QpProblem, x_target, param: str, h: float = 1e-5,
                     entries: Optional[Sequence[tuple]] = None,
                     solve_x: Optional[Callable[[QpProblem], np.ndarray]] = None,
                     hint: Optional[Sequence[int]] = None) -> np.ndarray:
    """Central-difference gradient of ``1/2 |x*(theta) - x_target|^2``.

    ``param`` names the problem field to perturb. ``Q`` is perturbed
    symmetrically (``Q_ij`` and ``Q_ji`` by ``h/2`` each). ``entries``
    restricts the computation to given index tuples (others are left at 0).
    ``solve_x`` maps a problem to its minimizer; the default is the
    active-set enumeration oracle, warm-started with ``hint`` or else the
    unperturbed active set.
    """
    if param not in PARAMS:
        raise ValueError(f"param must be one of {PARAMS}")
    loss = quadratic_loss(x_target)
    base = getattr(problem, param)
    grad = np.zeros_like(base, dtype=float)

    if solve_x is None:
        if hint is None:
            hint = solve_active_set_bruteforce(problem).pattern
        solve_x = lambda prob: _oracle_x(prob, hint)  # noqa: E731

    if entries is None:
        if param == "Q":
            entries = [(i, j) for i in range(base.shape[0]) for j in range(i, base.shape[1])]
        else:
            entries = list(np.ndindex(base.shape))
        if param in ("l", "u"):
            entries = [e for e in entries if np.isfinite(base[e])]

    def evaluate(delta):
        data = {k: np.array(getattr(problem, k)) for k in PARAMS}
        data[param] = data[param] + delta
        pert = QpProblem(**data)
        try:
            return loss(solve_x(pert))
        except Exception as exc:  # any solver failure means the perturbation left the domain
            raise PerturbationInfeasible(f"solve failed at {param}{idx}: {exc}") from exc

    for idx in entries:
        idx = tuple(idx)
        delta = np.zeros_like(base, dtype=float)
        if param == "Q":
            i, j = idx
            delta[i, j] += h / 2
            delta[j, i] += h / 2
        else:
            delta[idx] = h
        g = (evaluate(delta) - evaluate(-delta)) / (2 * h)
        grad[idx] = g
        if param == "Q":
            grad[idx[::-1]] = g
    return grad
