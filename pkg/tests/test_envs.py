import numpy as np
import pytest
import scipy.linalg

from app.core.errors import ConfigError, NumericalError, StructuralError
from app.services import envs
from app.services.envs import DoubleIntegrator, Pendulum, make_env


def test_double_integrator_reset_support():
    env = DoubleIntegrator()
    rng = np.random.default_rng(0)
    for _ in range(200):
        x = env.reset(rng)
        assert x.shape == (2,)
        assert np.all(np.abs(x) <= 1.0)


def test_pendulum_reset_support():
    env = Pendulum()
    rng = np.random.default_rng(0)
    for _ in range(200):
        theta, omega = env.reset(rng)
        assert -np.pi <= theta <= np.pi
        assert -1.0 <= omega <= 1.0


def test_reset_is_deterministic_given_seed():
    a = [DoubleIntegrator().reset(np.random.default_rng(5)) for _ in range(2)]
    np.testing.assert_array_equal(a[0], a[1])


def test_double_integrator_step_from_rest():
    env = DoubleIntegrator()
    env.reset(np.random.default_rng(0))
    env.state = np.array([1.0, 0.0])
    result = env.step(np.array([0.0]))
    np.testing.assert_array_equal(result.x_next, [1.0, 0.0])
    assert result.r == -1.0
    assert not result.terminal and not result.truncated


def test_double_integrator_dynamics():
    env = DoubleIntegrator()
    env.reset(np.random.default_rng(0))
    env.state = np.array([0.5, -0.4])
    result = env.step(np.array([1.0]))
    np.testing.assert_allclose(result.x_next, [0.5 + 0.05 * -0.4, -0.4 + 0.05])
    assert result.r == pytest.approx(-(0.25 + 0.1 * 0.16 + 0.01))


def test_pendulum_upright_rest_has_zero_reward():
    env = Pendulum()
    env.reset(np.random.default_rng(0))
    env.state = np.array([0.0, 0.0])
    result = env.step(np.array([0.0]))
    assert result.r == 0.0
    np.testing.assert_array_equal(result.x_next, [0.0, 0.0])


def test_pendulum_reward_wraps_angle():
    env = Pendulum()
    assert env.reward(np.array([2 * np.pi, 0.0]), np.array([0.0])) == pytest.approx(0.0, abs=1e-20)


def test_step_rejects_wrong_control_dimension():
    env = DoubleIntegrator()
    env.reset(np.random.default_rng(0))
    with pytest.raises(StructuralError):
        env.step(np.zeros(2))


def test_episode_truncates_after_max_steps():
    env = make_env("pendulum")
    env.reset(np.random.default_rng(1))
    for k in range(1, env.spec.max_episode_steps + 1):
        result = env.step(np.array([0.0]))
        assert result.truncated == (k == env.spec.max_episode_steps)
        assert not result.terminal


def test_rewards_are_never_positive():
    rng = np.random.default_rng(2)
    for name in ("lqr2d", "pendulum"):
        env = make_env(name)
        env.reset(rng)
        for _ in range(200):
            result = env.step(rng.uniform(env.spec.control_low, env.spec.control_high))
            assert result.r <= 0.0


def test_zero_control_rollout_matches_closed_form():
    env = DoubleIntegrator()
    gamma = 0.99
    rng = np.random.default_rng(3)
    ret, x0 = envs.rollout_return(env, lambda x: np.zeros(1), rng, discount=gamma)
    expected = envs.discounted_zero_control_return(env, x0, gamma, env.spec.max_episode_steps)
    assert ret == pytest.approx(expected, rel=1e-10)


def test_same_seed_and_actions_give_same_trajectory():
    controls = np.random.default_rng(9).uniform(-2, 2, size=(50, 1))

    def trajectory():
        env = make_env("pendulum", process_noise_std=0.01)
        xs = [env.reset(np.random.default_rng(4))]
        for u in controls:
            xs.append(env.step(u).x_next)
        return np.array(xs)

    np.testing.assert_array_equal(trajectory(), trajectory())


def test_pendulum_energy_drift_is_small_without_torque():
    env = Pendulum()
    env.reset(np.random.default_rng(0))
    env.state = np.array([np.pi - 0.1, 0.0])
    e0 = env.energy(env.state)
    energies = []
    for _ in range(env.spec.max_episode_steps):
        energies.append(env.energy(env.step(np.array([0.0])).x_next))
    assert np.max(np.abs(np.array(energies) - e0)) < 0.01 * abs(e0)


def test_make_env_rejects_unknown_names():
    with pytest.raises(ConfigError):
        make_env("cartpole")


def test_riccati_fixed_point_matches_scipy():
    env = DoubleIntegrator()
    gamma = 0.99
    P = envs.riccati(env.A, env.B, env.Q, env.R, gamma)
    # Discounting folds into the undiscounted DARE with scaled dynamics
    s = np.sqrt(gamma)
    expected = scipy.linalg.solve_discrete_are(s * env.A, s * env.B, env.Q, env.R)
    np.testing.assert_allclose(P, expected, rtol=1e-6)


def test_lqr_return_without_state_cost_is_zero():
    env = DoubleIntegrator(q_weights=[0.0, 0.0])
    assert envs.lqr_optimal_return(env, 0.99) == 0.0


def test_lqr_return_myopic_limit():
    env = DoubleIntegrator()
    x0 = np.random.default_rng(6).uniform(-1, 1, size=(500, 2))
    got = envs.lqr_optimal_return(env, 1e-12, x0=x0)
    expected = -np.mean(x0[:, 0] ** 2 + 0.1 * x0[:, 1] ** 2)
    assert got == pytest.approx(expected, rel=1e-9)


def test_lqr_return_matches_exact_expectation():
    env = DoubleIntegrator()
    P = envs.riccati(env.A, env.B, env.Q, env.R, 0.99)
    # x0 uniform on [-1, 1]^2 has covariance I/3
    exact = -np.trace(P) / 3.0
    sampled = envs.lqr_optimal_return(env, 0.99, rng=np.random.default_rng(0))
    assert sampled == pytest.approx(exact, rel=0.03)


def test_finite_horizon_value_is_bounded_by_infinite_horizon():
    env = DoubleIntegrator()
    x0 = np.random.default_rng(1).uniform(-1, 1, size=(100, 2))
    finite = envs.lqr_optimal_return(env, 0.99, x0=x0, horizon=200)
    infinite = envs.lqr_optimal_return(env, 0.99, x0=x0)
    assert infinite <= finite <= 0.0


def test_lqr_policy_beats_zero_control():
    env = DoubleIntegrator()
    gamma = 0.99
    P = envs.riccati(env.A, env.B, env.Q, env.R, gamma)
    K = envs.lqr_gain(env.A, env.B, env.R, P, gamma)
    rng_a, rng_b = np.random.default_rng(7), np.random.default_rng(7)
    lqr_ret, _ = envs.rollout_return(env, lambda x: -K @ x, rng_a, discount=gamma)
    zero_ret, _ = envs.rollout_return(env, lambda x: np.zeros(1), rng_b, discount=gamma)
    assert lqr_ret > zero_ret


def test_riccati_reports_non_convergence():
    env = DoubleIntegrator()
    with pytest.raises(NumericalError):
        envs.riccati(env.A, env.B, env.Q, env.R, 0.99, max_iters=3)


def test_lqr_oracle_only_for_double_integrator():
    with pytest.raises(ConfigError):
        envs.lqr_optimal_return(Pendulum(), 0.99)
