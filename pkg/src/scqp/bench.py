"""Seeded runtime benchmark over the random problem families."""
from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .diff import backward
from .problem import Settings, generate_random_box_qp, generate_random_qp
from .solver import solve

CSV_HEADER = ["family", "n", "m", "tol", "median_fwd_ms", "p95_fwd_ms", "median_bwd_ms",
              "iters_median", "solved_frac"]
TOLERANCES = {"low": 1e-3, "high": 1e-5}


def default_threads() -> int:
    env = os.environ.get("SCQP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: Sequence, threads: int | None = None) -> list:
    """Map ``fn`` over ``items`` in worker processes; serial when ``threads == 1``."""
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


@dataclass(frozen=True)
class BenchTask:
    family: str
    n: int
    m: int
    eps: float
    seed: int


def make_problem(family: str, n: int, m: int, seed: int):
    if family == "box":
        return generate_random_box_qp(n, seed)
    if family == "general":
        return generate_random_qp(n, m, seed)
    raise ValueError(f"unknown family {family!r}")


def run_task(task: BenchTask) -> tuple[float, float, int, bool]:
    """Solve one problem and differentiate it; returns (fwd_ms, bwd_ms, iters, solved)."""
    problem = make_problem(task.family, task.n, task.m, task.seed)
    settings = Settings(eps_abs=task.eps, eps_rel=task.eps)
    t0 = time.perf_counter()
    result = solve(problem, settings)
    fwd = 1e3 * (time.perf_counter() - t0)
    bwd = float("nan")
    if result.solved:
        grad_x = np.random.default_rng(task.seed).standard_normal(task.n)
        t0 = time.perf_counter()
        backward(result, problem, grad_x)
        bwd = 1e3 * (time.perf_counter() - t0)
    return fwd, bwd, result.iterations, result.solved


def run_bench(family: str, ns: Iterable[int], m_ratio: int = 1, tol: str = "low",
              trials: int = 10, batch: int = 32, seed: int = 0,
              threads: int | None = None) -> list[dict]:
    """One CSV row per problem size; timings are per problem in milliseconds."""
    eps = TOLERANCES[tol]
    rows = []
    for n in ns:
        m = n if family == "box" else m_ratio * n
        tasks = [BenchTask(family, n, m, eps, seed + k) for k in range(trials * batch)]
        out = parallel_map(run_task, tasks, threads)
        fwd = np.array([o[0] for o in out])
        bwd = np.array([o[1] for o in out if o[3]])
        iters = np.array([o[2] for o in out])
        rows.append({
            "family": family,
            "n": n,
            "m": m,
            "tol": tol,
            "median_fwd_ms": float(np.median(fwd)),
            "p95_fwd_ms": float(np.percentile(fwd, 95)),
            "median_bwd_ms": float(np.median(bwd)) if bwd.size else float("nan"),
            "iters_median": float(np.median(iters)),
            "solved_frac": float(np.mean([o[3] for o in out])),
        })
    return rows


def write_csv(rows: list[dict], path) -> None:
    """Append rows to ``path``, writing the header only for a new or empty file."""
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_HEADER)
        if new:
            writer.writeheader()
        writer.writerows(rows)
