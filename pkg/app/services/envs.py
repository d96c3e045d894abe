"""
Desk-scale control environments x' = f(x, u, xi) with known oracles.

"lqr2d"    double integrator with quadratic cost, solvable by a Riccati recursion
"pendulum" torque-limited swing-up, upright at angle 0
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from app.core.errors import ConfigError, NumericalError, PreconditionError, StructuralError

logger = logging.getLogger("envs")

MAX_EPISODE_STEPS = 200


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    control_dim: int
    control_low: np.ndarray
    control_high: np.ndarray
    max_episode_steps: int = MAX_EPISODE_STEPS
    gamma_hint: float = 0.99

    def __post_init__(self):
        if self.state_dim < 1 or self.control_dim < 1:
            raise StructuralError("state and control dimensions must be at least 1")
        if self.control_low.shape != (self.control_dim,) or self.control_high.shape != (self.control_dim,):
            raise StructuralError("control bounds must match the control dimension")
        if not np.all(self.control_low < self.control_high):
            raise PreconditionError("control_low must lie strictly below control_high")

    @property
    def control_center(self) -> np.ndarray:
        return 0.5 * (self.control_high + self.control_low)

    @property
    def control_half_range(self) -> np.ndarray:
        return 0.5 * (self.control_high - self.control_low)

    def clip(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.control_low, self.control_high)


@dataclass
class StepResult:
    x_next: np.ndarray
    r: float
    terminal: bool
    truncated: bool


class Env(ABC):
    spec: EnvSpec

    def __init__(self, process_noise_std: float = 0.0):
        if process_noise_std < 0:
            raise PreconditionError(f"process noise std must be non-negative, got {process_noise_std}")
        self.process_noise_std = process_noise_std
        self.state: Optional[np.ndarray] = None
        self.steps = 0
        self._rng: Optional[np.random.Generator] = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._rng = rng
        self.steps = 0
        self.state = self._sample_initial(rng)
        return self.state.copy()

    def step(self, u) -> StepResult:
        if self.state is None:
            raise PreconditionError("step() called before reset()")
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        if u.shape != (self.spec.control_dim,):
            raise StructuralError(f"control of shape {u.shape}, environment expects ({self.spec.control_dim},)")

        r = self.reward(self.state, u)
        x_next = self.dynamics(self.state, u)
        if self.process_noise_std > 0:
            x_next = x_next + self.process_noise_std * self._rng.standard_normal(self.spec.state_dim)
        self.state = x_next
        self.steps += 1
        return StepResult(
            x_next=x_next.copy(),
            r=float(r),
            terminal=False,
            truncated=self.steps >= self.spec.max_episode_steps,
        )

    @abstractmethod
    def _sample_initial(self, rng: np.random.Generator) -> np.ndarray:
        ...

    @abstractmethod
    def dynamics(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def reward(self, x: np.ndarray, u: np.ndarray) -> float:
        ...


class DoubleIntegrator(Env):
    """Position/velocity pair driven by a bounded acceleration: p' = p + dt v, v' = v + dt u."""

    dt = 0.05
    q_weights = np.array([1.0, 0.1])
    r_weight = 0.01

    def __init__(self, process_noise_std: float = 0.0, q_weights=None, r_weight: Optional[float] = None):
        super().__init__(process_noise_std)
        if q_weights is not None:
            self.q_weights = np.asarray(q_weights, dtype=np.float64)
        if r_weight is not None:
            self.r_weight = float(r_weight)
        self.spec = EnvSpec(
            name="lqr2d",
            state_dim=2,
            control_dim=1,
            control_low=np.array([-1.0]),
            control_high=np.array([1.0]),
        )

    @property
    def A(self) -> np.ndarray:
        return np.array([[1.0, self.dt], [0.0, 1.0]])

    @property
    def B(self) -> np.ndarray:
        return np.array([[0.0], [self.dt]])

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.q_weights)

    @property
    def R(self) -> np.ndarray:
        return np.array([[self.r_weight]])

    def _sample_initial(self, rng):
        return rng.uniform(-1.0, 1.0, size=2)

    def dynamics(self, x, u):
        return self.A @ x + self.B @ u

    def reward(self, x, u):
        return -(x @ self.Q @ x + u @ self.R @ u)


class Pendulum(Env):
    """Rod pendulum with gravity 10, mass 1, length 1; semi-implicit Euler at dt = 0.05."""

    dt = 0.05
    g = 10.0
    m = 1.0
    length = 1.0
    max_speed = 8.0
    max_torque = 2.0

    def __init__(self, process_noise_std: float = 0.0):
        super().__init__(process_noise_std)
        self.spec = EnvSpec(
            name="pendulum",
            state_dim=2,
            control_dim=1,
            control_low=np.array([-self.max_torque]),
            control_high=np.array([self.max_torque]),
        )

    def _sample_initial(self, rng):
        return np.array([rng.uniform(-np.pi, np.pi), rng.uniform(-1.0, 1.0)])

    def dynamics(self, x, u):
        theta, omega = x
        torque = float(np.clip(u[0], -self.max_torque, self.max_torque))
        accel = 3.0 * self.g / (2.0 * self.length) * np.sin(theta) + 3.0 / (self.m * self.length ** 2) * torque
        omega = float(np.clip(omega + accel * self.dt, -self.max_speed, self.max_speed))
        theta = theta + omega * self.dt
        return np.array([theta, omega])

    def reward(self, x, u):
        theta, omega = x
        return -(angle_normalize(theta) ** 2 + 0.1 * omega ** 2 + 0.001 * float(u[0]) ** 2)

    def energy(self, x) -> float:
        theta, omega = x
        inertia = self.m * self.length ** 2 / 3.0
        return 0.5 * inertia * omega ** 2 + self.m * self.g * self.length / 2.0 * np.cos(theta)


def angle_normalize(theta: float) -> float:
    return ((theta + np.pi) % (2.0 * np.pi)) - np.pi


ENVS = {
    "lqr2d": DoubleIntegrator,
    "pendulum": Pendulum,
}


def make_env(name: str, process_noise_std: float = 0.0) -> Env:
    try:
        cls = ENVS[name]
    except KeyError:
        raise ConfigError(f"Unknown environment '{name}', expected one of {sorted(ENVS)}") from None
    return cls(process_noise_std=process_noise_std)


def riccati(
    A: np.ndarray,
    B: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    gamma: float,
    horizon: Optional[int] = None,
    tol: float = 1e-10,
    max_iters: int = 100_000,
) -> np.ndarray:
    """
    Discounted Riccati recursion for the cost sum gamma^k (x'Qx + u'Ru).

    P <- Q + g A'PA - g^2 A'PB (R + g B'PB)^-1 B'PA, started from P = 0.
    With a horizon the recursion runs exactly that many times (finite-horizon
    value), otherwise until successive iterates differ by less than tol.
    """
    P = np.zeros_like(Q, dtype=np.float64)
    n_iters = horizon if horizon is not None else max_iters
    for _ in range(n_iters):
        BtP = B.T @ P
        gain = np.linalg.solve(R + gamma * BtP @ B, gamma * BtP @ A)
        P_next = Q + gamma * A.T @ P @ A - gamma * (A.T @ P @ B) @ gain
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise NumericalError("Riccati recursion produced non-finite values")
        delta = np.max(np.abs(P_next - P))
        P = P_next
        if horizon is None and delta < tol:
            return P
    if horizon is None:
        raise NumericalError(f"Riccati recursion did not converge within {max_iters} iterations")
    return P


def lqr_gain(A, B, R, P, gamma: float) -> np.ndarray:
    """Feedback K with u = -K x, optimal for the discounted value matrix P."""
    return np.linalg.solve(R + gamma * B.T @ P @ B, gamma * B.T @ P @ A)


def lqr_optimal_return(
    env: DoubleIntegrator,
    gamma: float,
    x0: Optional[np.ndarray] = None,
    horizon: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    n_samples: int = 10_000,
) -> float:
    """
    Optimal expected discounted return -E[x0' P x0] over the initial states.

    x0 defaults to n_samples draws from the environment's reset distribution.
    The control box is ignored.
    """
    if not isinstance(env, DoubleIntegrator):
        raise ConfigError("lqr_optimal_return only applies to the linear-quadratic double integrator")
    P = riccati(env.A, env.B, env.Q, env.R, gamma, horizon=horizon)
    if x0 is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        x0 = np.stack([env._sample_initial(rng) for _ in range(n_samples)])
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    return float(-np.mean(np.einsum("ni,ij,nj->n", x0, P, x0)))


def discounted_zero_control_return(env: DoubleIntegrator, x0, gamma: float, steps: int) -> float:
    """Closed-form u = 0 rollout: p_k = p0 + k dt v0, v_k = v0."""
    p0, v0 = np.asarray(x0, dtype=np.float64)
    k = np.arange(steps)
    p = p0 + k * env.dt * v0
    cost = env.q_weights[0] * p ** 2 + env.q_weights[1] * v0 ** 2
    return float(-(gamma ** k * cost).sum())


def rollout_return(env: Env, policy, rng: np.random.Generator, discount: Optional[float] = None) -> Tuple[float, np.ndarray]:
    """Run one episode of policy(x) -> u; returns the (optionally discounted) return and the initial state."""
    x = env.reset(rng)
    x0 = x.copy()
    total, weight = 0.0, 1.0
    while True:
        result = env.step(env.spec.clip(policy(x)))
        total += weight * result.r
        if discount is not None:
            weight *= discount
        x = result.x_next
        if result.terminal or result.truncated:
            return total, x0
