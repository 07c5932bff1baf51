"""Learning a linear model for the QP cost vector by gradient descent.

Each sample has features ``w`` (length 5) and cost ``p = w' theta`` with
``theta`` a 5 x n matrix. Targets are the QP minimizers under a hidden
``theta*``; training minimizes ``1/2 |x*(p(theta)) - x_target|^2`` with
gradients from the implicit backward pass. The loss and step size are
illustrative choices, not tuned reproductions of any published curve.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diff import backward, backward_factor
from .problem import QpProblem, Settings, generate_random_qp
from .solver import solve

N_FEATURES = 5
DEFAULT_LR = 0.5


@dataclass
class LearnRun:
    losses: list
    theta: np.ndarray
    theta_star: np.ndarray


def _with_cost(problem: QpProblem, p: np.ndarray) -> QpProblem:
    # Q, A, l, u are already validated; only p changes
    return QpProblem(problem.Q, p, problem.A, problem.l, problem.u)


def run_learn_demo(n: int = 20, m: int = 20, epochs: int = 100, batch: int = 32,
                   lr: float = DEFAULT_LR, seed: int = 0, n_samples: int = 32,
                   eps: float = 1e-3, init: str = "random") -> LearnRun:
    """Train ``theta`` and return the per-epoch mean training loss.

    ``init="truth"`` starts from ``theta*`` (loss should be ~0 throughout).
    """
    rng = np.random.default_rng(seed)
    base = generate_random_qp(n, m, seed)
    settings = Settings(eps_abs=eps, eps_rel=eps)
    theta_star = rng.standard_normal((N_FEATURES, n))
    W = rng.standard_normal((n_samples, N_FEATURES))
    targets = np.array([solve(_with_cost(base, w @ theta_star), settings).x for w in W])

    theta = theta_star.copy() if init == "truth" else rng.standard_normal((N_FEATURES, n))
    # one factorization serves every backward pass (gradients do not depend on rho)
    factor = backward_factor(base)

    losses = []
    for _ in range(epochs):
        order = rng.permutation(n_samples)
        total = 0.0
        for start in range(0, n_samples, batch):
            idx = order[start:start + batch]
            grad = np.zeros_like(theta)
            for k in idx:
                prob = _with_cost(base, W[k] @ theta)
                res = solve(prob, settings)
                diff = res.x - targets[k]
                total += 0.5 * float(diff @ diff)
                if res.solved:
                    dp = backward(res, prob, diff, factor=factor).dp
                    grad += np.outer(W[k], dp)
            theta = theta - lr * grad / len(idx)
        losses.append(total / n_samples)
    return LearnRun(losses, theta, theta_star)


def write_loss_csv(losses, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for i, loss in enumerate(losses):
            writer.writerow([i, repr(float(loss))])
