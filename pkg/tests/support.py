"""Shared helpers for the test suite."""
from pathlib import Path

import numpy as np

from scqp.oracle import LOWER, UPPER, solve_active_set_bruteforce
from scqp.problem import QpProblem, generate_random_qp, validate

FIXTURES = Path(__file__).parent / "fixtures"

MARGIN = 1e-3


def rel_inf_error(approx, exact, floor=1e-6):
    """Relative inf-norm error over entries of ``exact`` with magnitude above ``floor``."""
    approx = np.asarray(approx)
    exact = np.asarray(exact)
    keep = np.abs(exact) > floor
    if not keep.any():
        return float(np.max(np.abs(approx))) if approx.size else 0.0
    return float(np.max(np.abs(approx - exact)[keep]) / np.max(np.abs(exact)[keep]))


def is_strictly_complementary(problem: QpProblem, sol, margin=MARGIN) -> bool:
    """Active multipliers and inactive slacks both bounded away from zero.

    Also requires linearly independent active rows, so the active set is
    stable under small perturbations of every parameter.
    """
    ax = problem.A @ sol.x
    pat = np.asarray(sol.pattern)
    active = pat != 0
    if np.any(np.abs(sol.y[active]) < margin):
        return False
    slack = np.minimum(ax - problem.l, problem.u - ax)
    if np.any(slack[~active] < margin):
        return False
    rows = problem.A[active]
    if rows.shape[0] and (rows.shape[0] > problem.n or np.linalg.cond(rows) > 1e6):
        return False
    return True


def complementary_instances(count, seed0=0, n_choices=(4, 6, 8, 10), m_max=8,
                            min_active=1):
    """Seeded general-family instances with a strictly complementary solution.

    Yields ``(seed, problem, oracle_solution)``; instances with zero rows in
    ``A`` are skipped because a perturbed ``0 <= u`` can become infeasible.
    """
    found = 0
    seed = seed0
    while found < count:
        rng = np.random.default_rng(10_000 + seed)
        n = int(rng.choice(n_choices))
        m = int(rng.integers(2, min(m_max, 2 * n) + 1))
        prob = generate_random_qp(n, m, seed)
        # denser rows give more active constraints than the 15% default
        A = rng.standard_normal((m, n)) * (rng.random((m, n)) < 0.5)
        prob = validate(QpProblem(prob.Q, prob.p, A, prob.l, prob.u))
        seed += 1
        if np.any(np.all(prob.A == 0, axis=1)):
            continue
        sol = solve_active_set_bruteforce(prob)
        if len(sol.active_lower) + len(sol.active_upper) < min_active:
            continue
        if not is_strictly_complementary(prob, sol):
            continue
        found += 1
        yield seed - 1, prob, sol


def pattern_of(sol):
    return tuple(LOWER if i in sol.active_lower else UPPER if i in sol.active_upper else 0
                 for i in range(sol.y.size))
