"""JSON problem and result files.

Problem files hold ``Q``, ``p``, ``A``, ``l``, ``u`` as (nested) arrays, with
``null`` standing for -inf in ``l`` and +inf in ``u``, plus an optional
``settings`` object using the :class:`~scqp.problem.Settings` field names.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ScqpError
from .problem import QpProblem, Settings, validate
from .solver import SolveResult

PROBLEM_KEYS = ("Q", "p", "A", "l", "u")
RESULT_KEYS = ("status", "x", "y", "z", "iterations", "r_prim", "r_dual", "rho_final",
               "refactor_count", "solve_time_ms")


class ProblemFileError(ScqpError):
    pass


def _bounds(values, fill: float) -> np.ndarray:
    return np.array([fill if v is None else v for v in values], dtype=float)


def parse_problem(doc: dict) -> tuple[QpProblem, Settings]:
    missing = [k for k in PROBLEM_KEYS if k not in doc]
    if missing:
        raise ProblemFileError(f"missing keys: {', '.join(missing)}")
    try:
        n = len(doc["p"])
        A = np.array(doc["A"], dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        problem = validate(QpProblem(
            np.array(doc["Q"], dtype=float),
            np.array(doc["p"], dtype=float),
            A,
            _bounds(doc["l"], -math.inf),
            _bounds(doc["u"], math.inf),
        ))
        settings = Settings.from_dict(doc.get("settings") or {})
    except (TypeError, ValueError) as exc:
        raise ProblemFileError(str(exc)) from exc
    return problem, settings


def loads_problem(text: str) -> tuple[QpProblem, Settings, dict]:
    """Parse a problem document; returns the raw dict as well for extra keys."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ProblemFileError("top-level JSON value must be an object")
    problem, settings = parse_problem(doc)
    return problem, settings, doc


def load_problem(path) -> tuple[QpProblem, Settings, dict]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ProblemFileError(f"cannot read {path}: {exc}") from exc
    return loads_problem(text)


def _bound_list(b: np.ndarray) -> list:
    return [None if math.isinf(v) else float(v) for v in b]


def problem_to_dict(problem: QpProblem, settings: Settings | None = None) -> dict:
    doc: dict[str, Any] = {
        "Q": problem.Q.tolist(),
        "p": problem.p.tolist(),
        "A": problem.A.tolist(),
        "l": _bound_list(problem.l),
        "u": _bound_list(problem.u),
    }
    if settings is not None:
        doc["settings"] = settings.to_dict()
    return doc


def result_to_dict(result: SolveResult) -> dict:
    return {
        "status": result.status,
        "x": result.x.tolist(),
        "y": result.y.tolist(),
        "z": result.z.tolist(),
        "iterations": int(result.iterations),
        "r_prim": float(result.r_prim),
        "r_dual": float(result.r_dual),
        "rho_final": float(result.rho_final),
        "refactor_count": int(result.refactor_count),
        "solve_time_ms": float(result.solve_time_ms),
    }


def gradients_to_dict(grads) -> dict:
    return {name: getattr(grads, name).tolist() for name in ("dQ", "dp", "dA", "dl", "du")}


def dumps(doc: dict) -> str:
    # float repr is the shortest string that round-trips exactly
    return json.dumps(doc, indent=2)
