"""Exit criteria, one test per criterion; each prints a PASS/FAIL line."""
import time

import numpy as np
import pytest

from scqp import Settings, solve
from scqp.bench import CSV_HEADER, run_bench, write_csv
from scqp.diff import backward, fixed_point_map
from scqp.io import load_problem
from scqp.learn import run_learn_demo
from scqp.oracle import finite_diff_grad, kkt_residual, solve_active_set_bruteforce
from scqp.problem import generate_random_box_qp, generate_random_qp
from scqp.solver import DUAL_INFEASIBLE, PRIMAL_INFEASIBLE
from support import FIXTURES, complementary_instances, pattern_of, rel_inf_error

pytestmark = pytest.mark.acceptance

FAMILY = [(n, k * n) for n in (5, 10, 25) for k in (1, 2)]


def family_instances(count=100):
    for seed in range(count):
        n, m = FAMILY[seed % len(FAMILY)]
        yield seed, generate_random_qp(n, m, seed)


@pytest.fixture(scope="module")
def gradient_cases():
    """20 strictly complementary instances solved at eps = 1e-9, with FD gradients."""
    tight = Settings(eps_abs=1e-9, eps_rel=1e-9, max_iters=200_000)
    cases = []
    t0 = time.perf_counter()
    for seed, prob, sol in complementary_instances(20):
        target = sol.x + np.random.default_rng(seed).standard_normal(prob.n)
        res = solve(prob, tight)
        grads = backward(res, prob, res.x - target) if res.solved else None
        pat = pattern_of(sol)
        fd = {k: finite_diff_grad(prob, target, k, h=1e-5, hint=pat) for k in "pQAlu"}
        cases.append((seed, prob, res, grads, fd))
    return cases, time.perf_counter() - t0


def test_kkt_soundness(report):
    t0 = time.perf_counter()
    worst, solved = 0.0, 0
    for _, prob in family_instances():
        res = solve(prob)
        if not res.solved:
            continue
        solved += 1
        stat, *_ = kkt_residual(prob, res.x, res.y)
        prim = np.abs(prob.A @ res.x - res.z).max()
        worst = max(worst, prim / res.eps_prim, np.abs(stat).max() / res.eps_dual)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 and elapsed < 30
    report("1 KKT soundness", ok,
           f"{solved}/100 solved, max residual/tolerance {worst:.3f}, {elapsed:.1f}s")
    assert ok


def test_oracle_equivalence(report):
    t0 = time.perf_counter()
    settings = Settings(eps_abs=1e-6, eps_rel=1e-6)
    dx = dobj = dobj_abs = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(2, 9)), int(rng.integers(1, 9))
        prob = generate_random_qp(n, m, seed)
        res = solve(prob, settings)
        ref = solve_active_set_bruteforce(prob)
        dx = max(dx, np.abs(res.x - ref.x).max())
        gap = abs(prob.objective(res.x) - ref.objective)
        dobj_abs = max(dobj_abs, gap)
        # same absolute/relative convention as the solver tolerances
        dobj = max(dobj, gap / max(1.0, abs(ref.objective)))
    elapsed = time.perf_counter() - t0
    ok = dx <= 1e-4 and dobj <= 1e-6 and elapsed < 60
    report("2 oracle equivalence", ok,
           f"max |dx| {dx:.2e}, objective gap {dobj:.2e} scaled / {dobj_abs:.2e} absolute, "
           f"{elapsed:.1f}s")
    assert ok


def test_gradients_objective(gradient_cases, report):
    cases, elapsed = gradient_cases
    worst = 0.0
    for _, _, res, grads, fd in cases:
        assert grads is not None, res.status
        worst = max(worst, rel_inf_error(grads.dp, fd["p"]), rel_inf_error(grads.dQ, fd["Q"]))
    ok = worst <= 1e-3 and elapsed < 60
    report("3 dp, dQ vs finite differences", ok,
           f"{len(cases)} instances, max rel error {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_gradients_constraints(gradient_cases, report):
    cases, _ = gradient_cases
    worst = {"A": 0.0, "l": 0.0, "u": 0.0}
    for _, _, _, grads, fd in cases:
        for k in worst:
            worst[k] = max(worst[k], rel_inf_error(getattr(grads, "d" + k), fd[k]))
    ok = max(worst.values()) <= 1e-1
    report("4 dA, dl, du vs finite differences", ok,
           ", ".join(f"d{k} {v:.2e}" for k, v in worst.items()))
    assert ok


def test_fixed_point_certification(report):
    eps = 1e-8
    settings = Settings(eps_abs=eps, eps_rel=eps, max_iters=100_000)
    worst, solved = 0.0, 0
    problems = [p for _, p in family_instances()]
    problems += [generate_random_box_qp(20, seed) for seed in range(20)]
    for prob in problems:
        res = solve(prob, settings)
        if not res.solved:
            continue
        solved += 1
        gap = np.abs(fixed_point_map(res.v_star, prob, res.rho_final) - res.v_star).max()
        worst = max(worst, gap)
    ok = worst <= 100 * eps
    report("5 fixed-point residual", ok,
           f"{solved}/{len(problems)} solved, max |F(v)-v| {worst:.2e} (limit {100 * eps:.0e})")
    assert ok


def test_infeasibility_detection(report):
    prob, s, _ = load_problem(FIXTURES / "infeasible.json")
    primal = solve(prob, s).status
    prob, s, _ = load_problem(FIXTURES / "unbounded.json")
    dual = solve(prob, s).status
    flagged = [seed for seed in range(100)
               if solve(generate_random_box_qp(10 + seed % 3 * 20, seed)).status
               in (PRIMAL_INFEASIBLE, DUAL_INFEASIBLE)]
    ok = primal == PRIMAL_INFEASIBLE and dual == DUAL_INFEASIBLE and not flagged
    report("6 infeasibility detection", ok,
           f"fixtures -> {primal}, {dual}; {len(flagged)}/100 box instances flagged")
    assert ok


def test_factorization_economy(report):
    defaults = Settings()
    bound = 1 + defaults.adaptive_rho_max_iter // defaults.check_solved
    fixed = [solve(p, Settings(adaptive_rho=False)).refactor_count for _, p in family_instances(50)]
    adaptive = [solve(p).refactor_count for _, p in family_instances(50)]
    ok = set(fixed) == {1} and max(adaptive) <= bound
    report("7 factorization economy", ok,
           f"fixed rho counts {sorted(set(fixed))}, adaptive max {max(adaptive)} (bound {bound})")
    assert ok


def test_scaling_neutrality(report):
    settings = Settings(eps_abs=1e-6, eps_rel=1e-6)
    worst = 0.0
    for seed in range(50):
        prob = generate_random_box_qp((10, 25, 50)[seed % 3], seed)
        a = solve(prob, settings).x
        b = solve(prob, settings.replace(scale=False)).x
        worst = max(worst, np.abs(a - b).max())
    ok = worst <= 1e-4
    report("8 scaling neutrality", ok, f"max |x_on - x_off| {worst:.2e}")
    assert ok


def test_learn_demo(report):
    t0 = time.perf_counter()
    ratios = []
    for seed in range(10):
        run = run_learn_demo(n=20, m=20, epochs=100, seed=seed)
        ratios.append(run.losses[-1] / run.losses[0])
    elapsed = time.perf_counter() - t0
    passed = sum(r < 0.5 for r in ratios)
    ok = passed >= 9 and elapsed < 120
    report("9 learn demo", ok,
           f"{passed}/10 seeds below 50%, worst ratio {max(ratios):.3f}, {elapsed:.1f}s")
    assert ok


def test_bench_informational(tmp_path, report):
    path = tmp_path / "bench.csv"
    rows = run_bench("box", [10, 100, 500], trials=1, batch=4)
    write_csv(rows, path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    summary = "; ".join(f"n={r['n']}: fwd {r['median_fwd_ms']:.1f} ms, "
                        f"bwd {r['median_bwd_ms']:.1f} ms" for r in rows)
    report("10 bench (informational)", True, summary)
