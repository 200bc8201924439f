import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lm_forecast.errors import ConfigError, SolveFailure
from lm_forecast.lm_core import (
    LeastSquaresProblem,
    LmConfig,
    StopReason,
    lm_fit,
    lm_step,
    solve_damped_normal,
)


def gauss_elim(A, b):
    """Dense Gaussian elimination with partial pivoting (test oracle)."""
    A = [list(map(float, row)) + [float(v)] for row, v in zip(A, b)]
    n = len(A)
    for c in range(n):
        p = max(range(c, n), key=lambda r: abs(A[r][c]))
        A[c], A[p] = A[p], A[c]
        for r in range(c + 1, n):
            f = A[r][c] / A[c][c]
            for k in range(c, n + 1):
                A[r][k] -= f * A[c][k]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        x[r] = (A[r][n] - sum(A[r][k] * x[k] for k in range(r + 1, n))) / A[r][r]
    return np.array(x)


def linear_problem(A, b):
    A, b = np.asarray(A, float), np.asarray(b, float)
    return LeastSquaresProblem(lambda th: A @ th - b, lambda th: A, A.shape[1], A.shape[0])


def rosenbrock():
    return LeastSquaresProblem(
        lambda th: np.array([10.0 * (th[1] - th[0] ** 2), 1.0 - th[0]]),
        lambda th: np.array([[-20.0 * th[0], 10.0], [-1.0, 0.0]]),
        2, 2,
    )


T_DECAY = np.round(np.arange(21) * 0.1, 10)


def exp_decay_problem():
    y = np.exp(-0.5 * T_DECAY)
    return LeastSquaresProblem(
        lambda k: np.exp(-k[0] * T_DECAY) - y,
        lambda k: (-T_DECAY * np.exp(-k[0] * T_DECAY))[:, None],
        1, T_DECAY.size,
    )


class TestSolveDampedNormal:
    def test_identity(self):
        np.testing.assert_allclose(solve_damped_normal(np.eye(2), 1.0, np.array([2.0, 4.0])), [1.0, 2.0])

    def test_pure_damping(self):
        np.testing.assert_allclose(solve_damped_normal(np.zeros((1, 1)), 2.0, np.array([4.0])), [2.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_elimination_oracle(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(5, 5))
        spd = M @ M.T + 0.5 * np.eye(5)
        rhs = rng.normal(size=5)
        mu = 0.3
        x = solve_damped_normal(spd, mu, rhs)
        ref = gauss_elim(spd + mu * np.eye(5), rhs)
        np.testing.assert_allclose(x, ref, rtol=1e-10, atol=1e-10)

    def test_jitter_rescues_semidefinite(self):
        # rank-1 with mu = 0 fails plain Cholesky; jitter ladder must kick in
        v = np.array([1.0, 2.0])
        x = solve_damped_normal(np.outer(v, v), 0.0, v)
        assert np.all(np.isfinite(x))

    def test_failure_after_jitter(self):
        with pytest.raises(SolveFailure):
            solve_damped_normal(-np.eye(2), 0.0, np.ones(2))

    def test_non_finite_rejected(self):
        with pytest.raises(SolveFailure):
            solve_damped_normal(np.array([[np.nan]]), 1.0, np.ones(1))

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(1, 6), st.integers(1, 8), st.floats(1e-6, 1e6),
        st.integers(0, 2**32 - 1),
    )
    def test_never_fails_for_positive_damping(self, p, m, mu, seed):
        J = np.random.default_rng(seed).uniform(-10, 10, size=(m, p))
        x = solve_damped_normal(J.T @ J, mu, np.ones(p))
        assert np.all(np.isfinite(x))


class TestLmStep:
    def test_zero_residual_gives_zero_step(self):
        prob = LeastSquaresProblem(lambda th: np.zeros(3), lambda th: np.ones((3, 2)), 2, 3)
        np.testing.assert_array_equal(lm_step(prob, np.array([0.3, -1.0]), 0.5), 0.0)

    def test_gauss_newton_exact_for_linear(self):
        rng = np.random.default_rng(7)
        A, b = rng.normal(size=(6, 3)), rng.normal(size=6)
        ref = np.linalg.lstsq(A, b, rcond=None)[0]
        delta = lm_step(linear_problem(A, b), np.zeros(3), 0.0)
        np.testing.assert_allclose(delta, ref, rtol=1e-10)

    def test_gradient_descent_limit(self):
        prob = rosenbrock()
        th = np.array([-1.2, 1.0])
        J, r = prob.jacobian(th), prob.residuals(th)
        mu = 1e12
        sd = -(J.T @ r) / mu
        delta = lm_step(prob, th, mu)
        assert np.linalg.norm(delta - sd) <= 1e-6 * np.linalg.norm(sd)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**32 - 1), st.floats(-1e-12, 1e-12))
    def test_gauss_newton_exactness_property(self, p, seed, tiny):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(p + 3, p))
        b = rng.normal(size=p + 3)
        ref = np.linalg.lstsq(A, b, rcond=None)[0]
        delta = lm_step(linear_problem(A, b), np.zeros(p), abs(tiny))
        assert np.linalg.norm(delta - ref) <= 1e-8 * max(np.linalg.norm(ref), 1e-300)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**32 - 1), st.floats(1e10, 1e14))
    def test_gradient_limit_property(self, p, seed, factor):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(p + 2, p))
        b = rng.normal(size=p + 2)
        JtJ = A.T @ A
        mu = factor * np.abs(JtJ).sum(axis=1).max()
        g = A.T @ (A @ np.zeros(p) - b)
        delta = lm_step(linear_problem(A, b), np.zeros(p), mu)
        sd = -g / mu
        assert np.linalg.norm(delta - sd) <= 1e-4 * np.linalg.norm(sd)


class TestLmFit:
    def test_linear_converges_in_three_epochs(self):
        rng = np.random.default_rng(3)
        A, b = rng.normal(size=(5, 2)), rng.normal(size=5)
        ref = np.linalg.lstsq(A, b, rcond=None)[0]
        out = lm_fit(linear_problem(A, b), np.zeros(2))
        assert out.epochs_run <= 3
        assert np.linalg.norm(out.params - ref) <= 1e-8 * np.linalg.norm(ref)

    def test_rosenbrock(self):
        out = lm_fit(rosenbrock(), np.array([-1.2, 1.0]))
        np.testing.assert_allclose(out.params, [1.0, 1.0], atol=1e-6)

    def test_exponential_decay_rate(self):
        out = lm_fit(exp_decay_problem(), np.array([0.1]))
        assert abs(out.params[0] - 0.5) <= 1e-6

    def test_final_sse_recomputable(self):
        prob = rosenbrock()
        out = lm_fit(prob, np.array([-1.2, 1.0]))
        r = prob.residuals(out.params)
        assert out.final_sse == float(r @ r)

    def test_accepted_sse_strictly_decreasing(self):
        out = lm_fit(rosenbrock(), np.array([-1.2, 1.0]), LmConfig(gradient_tol=0.0))
        sse = [t.sse for t in out.trace]
        assert all(b < a for a, b in zip(sse, sse[1:]))
        assert [t.epoch for t in out.trace] == list(range(out.epochs_run + 1))

    def test_reproducible(self):
        a = lm_fit(rosenbrock(), np.array([-1.2, 1.0]))
        b = lm_fit(rosenbrock(), np.array([-1.2, 1.0]))
        assert a.params.tobytes() == b.params.tobytes()
        assert a.trace == b.trace and a.stop_reason == b.stop_reason

    def test_max_epochs(self):
        out = lm_fit(rosenbrock(), np.array([-1.2, 1.0]), LmConfig(max_epochs=1))
        assert out.epochs_run == 1 and out.stop_reason is StopReason.MAX_EPOCHS

    def test_external_stop(self):
        seen = []

        def stop(epoch, params):
            seen.append(epoch)
            return epoch == 2

        out = lm_fit(rosenbrock(), np.array([-1.2, 1.0]), external_stop=stop)
        assert seen == [1, 2]
        assert out.stop_reason is StopReason.EXTERNAL_STOP and out.epochs_run == 2

    def test_gradient_tol_at_optimum(self):
        out = lm_fit(rosenbrock(), np.array([1.0, 1.0]))
        assert out.stop_reason is StopReason.GRADIENT_TOL and out.epochs_run == 0

    def test_mu_max_when_no_descent_possible(self):
        # Jacobian lies: it points uphill, so no damped step can reduce the SSE
        prob = LeastSquaresProblem(lambda th: th.copy(), lambda th: -np.eye(1), 1, 1)
        out = lm_fit(prob, np.array([1.0]), LmConfig(step_tol=0.0))
        assert out.stop_reason is StopReason.MU_MAX
        assert out.params[0] == 1.0

    def test_step_tol(self):
        prob = LeastSquaresProblem(lambda th: th.copy(), lambda th: -np.eye(1), 1, 1)
        out = lm_fit(prob, np.array([1.0]), LmConfig(step_tol=1e-3, mu_max=1e30))
        assert out.stop_reason is StopReason.STEP_TOL

    def test_bad_init_shape(self):
        with pytest.raises(ValueError):
            lm_fit(rosenbrock(), np.zeros(3))

    def test_problem_shape_contract(self):
        prob = LeastSquaresProblem(lambda th: np.zeros(4), lambda th: np.zeros((3, 2)), 2, 3)
        with pytest.raises(ValueError):
            lm_fit(prob, np.zeros(2))


@pytest.mark.parametrize(
    "kw",
    [dict(mu_init=0), dict(mu_increase=1.0), dict(mu_decrease=1.0), dict(mu_init=10, mu_max=1),
     dict(max_epochs=0), dict(gradient_tol=-1)],
)
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        LmConfig(**kw)
