import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scqp import QpProblem, Settings, solve, validate
from scqp.problem import generate_random_box_qp, generate_random_qp
from scqp.scaling import (RhoState, ScalingData, adaptive_rho_update, compute_scaling,
                          initial_rho, relative_residuals, scale_iterates, scale_problem,
                          unscale_solution)

UNIT_REFS = (1.0, 1.0, 1.0, 1.0, 1.0)


class TestComputeScaling:
    def test_diagonal_q(self):
        s = compute_scaling(np.diag([4.0, 16.0]), np.eye(2), beta=0.0)
        np.testing.assert_allclose(s.D, [0.5, 0.25])
        # E holds reciprocal row norms of AD, so EAD = I here
        np.testing.assert_allclose(s.E, [2.0, 4.0])
        Q_bar = s.D[:, None] * np.diag([4.0, 16.0]) * s.D[None, :]
        np.testing.assert_allclose(Q_bar, np.eye(2))

    def test_full_shrinkage(self):
        s = compute_scaling(np.diag([4.0, 16.0]), np.eye(2), beta=1.0)
        np.testing.assert_allclose(s.D, [0.375, 0.375])

    def test_auto_beta(self):
        assert compute_scaling(np.diag([4.0, 16.0]), np.eye(2)).beta_used == 0.0
        assert compute_scaling(np.diag([1.0, 1e8]), np.eye(2)).beta_used == 0.5

    def test_zero_rows_are_neutral(self):
        Q = np.diag([4.0, 0.0])
        A = np.array([[1.0, 0.0], [0.0, 0.0]])
        s = compute_scaling(Q, A, beta=0.0)
        assert np.all(np.isfinite(s.D)) and np.all(s.D > 0)
        assert s.E[1] == 1.0

    def test_rows_of_scaled_a_have_unit_norm(self):
        prob = generate_random_qp(20, 40, 0)
        s = compute_scaling(prob.Q, prob.A)
        A_bar = scale_problem(prob, s).A
        norms = np.abs(A_bar).max(axis=1)
        np.testing.assert_allclose(norms[norms > 0], 1.0)


class TestScaleProblem:
    def test_identity_scaling(self):
        prob = generate_random_qp(4, 3, 0)
        sp = scale_problem(prob, ScalingData.identity(4, 3))
        for name in ("Q", "p", "A", "l", "u"):
            np.testing.assert_array_equal(getattr(sp, name), getattr(prob, name))

    def test_infinite_bounds_survive(self):
        prob = validate(QpProblem(np.eye(2), np.zeros(2), np.eye(2),
                                  np.array([-np.inf, 0.0]), np.array([1.0, np.inf])))
        sp = scale_problem(prob, ScalingData(np.array([2.0, 3.0]), np.array([0.5, 4.0]), 0.0))
        assert np.isneginf(sp.l[0]) and np.isposinf(sp.u[1])

    def test_unscale_example(self):
        s = ScalingData(np.array([2.0]), np.array([4.0]), 0.0)
        x, z, y = unscale_solution(np.array([3.0]), np.array([8.0]), np.array([1.0]), s)
        assert (x[0], z[0], y[0]) == (6.0, 2.0, 4.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_round_trip(self, n, m, seed):
        rng = np.random.default_rng(seed)
        s = ScalingData(rng.uniform(0.1, 10, n), rng.uniform(0.1, 10, m), 0.0)
        x, z, y = rng.standard_normal(n), rng.standard_normal(m), rng.standard_normal(m)
        back = unscale_solution(*scale_iterates(x, z, y, s), s)
        for a, b in zip(back, (x, z, y)):
            np.testing.assert_allclose(a, b, rtol=1e-14)

    def test_argmin_invariant(self):
        prob = generate_random_box_qp(10, 3)
        tight = Settings(eps_abs=1e-8, eps_rel=1e-8)
        a = solve(prob, tight).x
        b = solve(prob, tight.replace(scale=False)).x
        np.testing.assert_allclose(a, b, atol=1e-6)


class TestInitialRho:
    def test_identity(self):
        assert initial_rho(np.eye(2), np.eye(2)) == pytest.approx(1.0)

    def test_tall_a(self):
        # sqrt(4/2) * sqrt(2) / (2 * sqrt(2)) = 1/sqrt(2)
        A = np.vstack([np.eye(2), np.eye(2)])
        assert initial_rho(np.eye(2), A) == pytest.approx(2 ** -0.5)

    def test_zero_a_falls_back(self):
        assert initial_rho(np.eye(3), np.zeros((2, 3))) == 1.0

    def test_clamped(self):
        assert initial_rho(1e12 * np.eye(2), np.eye(2)) == 1e6


class TestAdaptiveRho:
    def test_equal_residuals_keep_rho(self):
        state, refactor = adaptive_rho_update(RhoState(1.0), 1.0, 1.0, UNIT_REFS, 10.0,
                                              1e-6, 1e6)
        assert state.rho == 1.0 and not refactor

    def test_large_ratio_updates(self):
        state, refactor = adaptive_rho_update(RhoState(1.0, 1), 100.0, 1.0, UNIT_REFS, 10.0,
                                              1e-6, 1e6, iteration=75)
        assert state.rho == pytest.approx(10.0)
        assert refactor and state.refactor_count == 2 and state.last_update_iter == 75

    def test_gate_is_inclusive(self):
        state, refactor = adaptive_rho_update(RhoState(1.0), 1.0, 100.0, UNIT_REFS, 10.0,
                                              1e-6, 1e6)
        assert state.rho == pytest.approx(0.1) and refactor

    def test_small_ratio_ignored(self):
        state, refactor = adaptive_rho_update(RhoState(1.0), 4.0, 1.0, UNIT_REFS, 10.0,
                                              1e-6, 1e6)
        assert state.rho == 1.0 and not refactor

    def test_zero_residual_guard(self):
        state, refactor = adaptive_rho_update(RhoState(2.0), 0.0, 1.0, UNIT_REFS, 10.0,
                                              1e-6, 1e6)
        assert state.rho == 2.0 and not refactor

    def test_relative_residuals(self):
        rp, rd = relative_residuals(2.0, 3.0, (4.0, 1.0, 1.0, 6.0, 2.0))
        assert (rp, rd) == (0.5, 0.5)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1e-6, 1e6), st.floats(1e-8, 1e8), st.floats(1e-8, 1e8))
    def test_always_clamped(self, rho, rp, rd):
        state, _ = adaptive_rho_update(RhoState(rho), rp, rd, UNIT_REFS, 10.0, 1e-6, 1e6)
        assert 1e-6 <= state.rho <= 1e6
