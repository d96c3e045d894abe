"""
Deterministic actor-critic with the DDPG, TD3 and DDPG++ mechanisms as toggles.

One train_step samples a mini-batch, regresses both critics on a shared
bootstrapped target, updates the actor on (optionally propensity-weighted)
critic values when the policy-delay counter allows, and soft-updates every
target network.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from app.core.errors import ConfigError, NumericalError, PreconditionError
from app.models.config import AgentConfig
from app.models.records import NO_ACCURACY, UpdateDiagnostics
from app.services import nn, propensity
from app.services.envs import EnvSpec
from app.services.nn import AdamState, Grads, MlpParams
from app.services.replay import Batch, ReplayBuffer

logger = logging.getLogger("agent")

ACTOR_FINAL_BOUND = 3e-3
NETWORK_FILES = ("actor", "actor_target", "critic1", "critic1_target", "critic2", "critic2_target")


@dataclass
class AgentState:
    actor: MlpParams
    actor_target: MlpParams
    critic1: MlpParams
    critic1_target: MlpParams
    actor_opt: AdamState
    critic1_opt: AdamState
    # Absent when twin_critics is off
    critic2: Optional[MlpParams] = None
    critic2_target: Optional[MlpParams] = None
    critic2_opt: Optional[AdamState] = None
    critic_updates: int = 0
    actor_updates: int = 0

    @property
    def state_dim(self) -> int:
        return self.actor.in_dim

    @property
    def control_low(self) -> np.ndarray:
        return self.actor.output_offset - self.actor.output_scale

    @property
    def control_high(self) -> np.ndarray:
        return self.actor.output_offset + self.actor.output_scale

    @property
    def half_range(self) -> np.ndarray:
        return self.actor.output_scale

    def networks(self) -> Dict[str, Optional[MlpParams]]:
        return {name: getattr(self, name) for name in NETWORK_FILES}


def preset(name: str) -> AgentConfig:
    """Hyper-parameters for 'ddpg', 'td3', 'ddpgpp' and 'ddpgpp-prop'."""
    if name == "ddpg":
        return AgentConfig(
            twin_critics=False, policy_delay=1, target_noise_std=0.0, target_noise_clip=0.0,
            use_propensity=False, actor_uses_min=False,
            exploration_noise_std=0.1, actor_lr=1e-3, critic_lr=1e-3,
        )
    if name == "td3":
        return AgentConfig(
            twin_critics=True, policy_delay=2, target_noise_std=0.2, target_noise_clip=0.5,
            use_propensity=False, actor_uses_min=False,
            exploration_noise_std=0.1, actor_lr=1e-3, critic_lr=1e-3,
        )
    if name in ("ddpgpp", "ddpgpp-prop"):
        return AgentConfig(
            twin_critics=True, policy_delay=1, target_noise_std=0.0, target_noise_clip=0.0,
            use_propensity=name == "ddpgpp-prop", actor_uses_min=True,
            exploration_noise_std=0.2, actor_lr=3e-4, critic_lr=3e-4,
        )
    raise ConfigError(f"Unknown algorithm preset '{name}', expected ddpg, td3, ddpgpp or ddpgpp-prop")


def init_agent(spec: EnvSpec, cfg: AgentConfig, rng: np.random.Generator) -> AgentState:
    hidden = list(cfg.hidden_sizes)
    relus = ["relu"] * len(hidden)

    actor = nn.init_mlp(
        [spec.state_dim, *hidden, spec.control_dim],
        relus + ["tanh"],
        rng,
        final_bound=ACTOR_FINAL_BOUND,
        output_scale=spec.control_half_range,
        output_offset=spec.control_center,
    )

    def critic():
        return nn.init_mlp([spec.state_dim + spec.control_dim, *hidden, 1], relus + ["identity"], rng)

    critic1 = critic()
    state = AgentState(
        actor=actor,
        actor_target=actor.copy(),
        critic1=critic1,
        critic1_target=critic1.copy(),
        actor_opt=AdamState.fresh(actor, cfg.actor_lr),
        critic1_opt=AdamState.fresh(critic1, cfg.critic_lr),
    )
    if cfg.twin_critics:
        critic2 = critic()
        state.critic2 = critic2
        state.critic2_target = critic2.copy()
        state.critic2_opt = AdamState.fresh(critic2, cfg.critic_lr)
    return state


def _clip(state: AgentState, u: np.ndarray) -> np.ndarray:
    return np.clip(u, state.control_low, state.control_high)


def select_action(
    state: AgentState,
    x: np.ndarray,
    cfg: AgentConfig,
    explore: bool,
    rng: Optional[np.random.Generator] = None,
    env_step: Optional[int] = None,
) -> np.ndarray:
    """
    Deterministic actor output, or with explore=True: uniform in the box for the
    first burn_in environment steps, then Gaussian noise clamped to the box.
    Exploring needs both rng and env_step.
    """
    if not explore:
        return nn.forward(state.actor, x)
    if rng is None or env_step is None:
        raise PreconditionError("exploration needs an rng and the current env_step")
    if env_step < cfg.burn_in:
        return rng.uniform(state.control_low, state.control_high)
    u = nn.forward(state.actor, x)
    noise = rng.normal(0.0, 1.0, size=u.shape) * cfg.exploration_noise_std * state.half_range
    return _clip(state, u + noise)


def _q(critic: MlpParams, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    return nn.forward(critic, np.hstack([x, u]))[:, 0]


def compute_target(state: AgentState, batch: Batch, cfg: AgentConfig, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """y = r + gamma * min_i q_i^t(x', u^t(x')), or y = r on terminal tuples."""
    if len(batch) == 0:
        raise PreconditionError("compute_target needs a non-empty batch")
    u_next = nn.forward(state.actor_target, batch.x_next)
    if cfg.target_noise_std > 0:
        if rng is None:
            raise PreconditionError("target noise is on but no rng was given")
        scale = state.half_range
        noise = rng.normal(0.0, 1.0, size=u_next.shape) * cfg.target_noise_std * scale
        noise = np.clip(noise, -cfg.target_noise_clip * scale, cfg.target_noise_clip * scale)
        u_next = _clip(state, u_next + noise)

    q_next = _q(state.critic1_target, batch.x_next, u_next)
    if cfg.twin_critics:
        q_next = np.minimum(q_next, _q(state.critic2_target, batch.x_next, u_next))
    return np.where(batch.terminal, batch.r, batch.r + cfg.gamma * q_next)


def _regress(critic: MlpParams, opt: AdamState, xu: np.ndarray, y: np.ndarray):
    """One Adam step on mean (y - q)^2; returns (critic, opt, loss, q, skipped)."""
    q, trace = nn.forward_trace(critic, xu)
    q = q[:, 0]
    err = q - y
    loss = float(np.mean(err * err))
    if not np.isfinite(loss):
        return critic, opt, loss, q, True
    grads, _ = nn.backward(critic, xu, (2.0 * err / len(y))[:, None], trace)
    try:
        critic, opt = nn.adam_step(critic, grads, opt)
    except NumericalError:
        return critic, opt, loss, q, True
    return critic, opt, loss, q, False


def update_critics(state: AgentState, batch: Batch, y: np.ndarray, cfg: AgentConfig) -> Dict[str, float]:
    """Regress every online critic on the same targets y; counts one critic update."""
    if y.shape != (len(batch),):
        raise PreconditionError(f"targets of shape {y.shape} do not align with a batch of {len(batch)}")
    xu = np.hstack([batch.x, batch.u])

    state.critic1, state.critic1_opt, loss1, q1, skipped = _regress(state.critic1, state.critic1_opt, xu, y)
    losses, q2 = [loss1], q1
    if cfg.twin_critics:
        state.critic2, state.critic2_opt, loss2, q2, skipped2 = _regress(state.critic2, state.critic2_opt, xu, y)
        losses.append(loss2)
        skipped = skipped or skipped2
    state.critic_updates += 1

    if skipped:
        logger.warning(f"Critic update {state.critic_updates} skipped: non-finite loss or gradient")
    return {
        "critic_loss": float(np.mean(losses)),
        "mean_q1": float(np.mean(q1)),
        "mean_q2": float(np.mean(q2)),
        "critic_skipped": skipped,
    }


def actor_objective_and_grad(
    state: AgentState,
    x: np.ndarray,
    weights: np.ndarray,
    cfg: AgentConfig,
) -> Tuple[float, Grads]:
    """
    Objective (1/|B|) sum w(x) q(x, u_theta(x)) and its gradient w.r.t. the actor.

    q is min(q1, q2) when actor_uses_min and twin critics are on, else q1.
    Ties go to q1.
    """
    n = x.shape[0]
    u, actor_trace = nn.forward_trace(state.actor, x)
    xu = np.hstack([x, u])
    q1, trace1 = nn.forward_trace(state.critic1, xu)
    q1 = q1[:, 0]
    coef = weights / n

    use_min = cfg.actor_uses_min and cfg.twin_critics
    if use_min:
        q2, trace2 = nn.forward_trace(state.critic2, xu)
        q2 = q2[:, 0]
        from_q2 = q2 < q1
        q = np.where(from_q2, q2, q1)
    else:
        from_q2 = np.zeros(n, dtype=bool)
        q = q1

    objective = float(np.sum(coef * q))
    _, dxu = nn.backward(state.critic1, xu, np.where(from_q2, 0.0, coef)[:, None], trace1)
    if from_q2.any():
        _, dxu2 = nn.backward(state.critic2, xu, np.where(from_q2, coef, 0.0)[:, None], trace2)
        dxu = dxu + dxu2
    du = dxu[:, state.state_dim:]
    grads, _ = nn.backward(state.actor, x, du, actor_trace)
    return objective, grads


def update_actor(state: AgentState, batch: Batch, cfg: AgentConfig) -> Dict[str, float]:
    """Gradient ascent on the (propensity-weighted) critic value of the actor's controls."""
    if cfg.use_propensity:
        policy_u = nn.forward(state.actor, batch.x)
        rep = propensity.report(batch.u, policy_u, c=cfg.propensity_c, iters=cfg.propensity_iters)
        weights, accuracy = rep.beta_tilde, rep.accuracy
    else:
        weights, accuracy = np.ones(len(batch)), NO_ACCURACY

    fragment = {
        "mean_beta_tilde": float(np.mean(weights)),
        "classifier_accuracy": float(accuracy),
        "actor_updated": True,
        "actor_skipped": False,
    }
    objective, grads = actor_objective_and_grad(state, batch.x, weights, cfg)
    fragment["actor_objective"] = objective
    if not np.isfinite(objective):
        logger.warning(f"Actor update skipped: non-finite objective {objective}")
        fragment["actor_skipped"] = True
        return fragment
    try:
        # Ascent on the objective is descent on its negation
        state.actor, state.actor_opt = nn.adam_step(state.actor, grads.scaled(-1.0), state.actor_opt)
    except NumericalError as e:
        logger.warning(f"Actor update skipped: {str(e)}")
        fragment["actor_skipped"] = True
        return fragment
    state.actor_updates += 1
    return fragment


def update_targets(state: AgentState, cfg: AgentConfig) -> None:
    state.critic1_target = nn.soft_update(state.critic1_target, state.critic1, cfg.tau)
    if state.critic2 is not None:
        state.critic2_target = nn.soft_update(state.critic2_target, state.critic2, cfg.tau)
    state.actor_target = nn.soft_update(state.actor_target, state.actor, cfg.tau)


def train_step(state: AgentState, buffer: ReplayBuffer, cfg: AgentConfig, rng: np.random.Generator) -> UpdateDiagnostics:
    if buffer.count < cfg.batch_size:
        raise PreconditionError(f"buffer holds {buffer.count} transitions, batch_size is {cfg.batch_size}")
    batch = buffer.sample_arrays(cfg.batch_size, rng)
    y = compute_target(state, batch, cfg, rng)
    values = update_critics(state, batch, y, cfg)
    if state.critic_updates % cfg.policy_delay == 0:
        values.update(update_actor(state, batch, cfg))
    update_targets(state, cfg)
    return UpdateDiagnostics(**values)


def save_agent(directory, state: AgentState) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, params in state.networks().items():
        if params is not None:
            nn.save_params(directory / f"{name}.params", params)


def load_agent(directory, cfg: AgentConfig) -> AgentState:
    """Networks from a checkpoint directory; optimiser moments start fresh."""
    directory = Path(directory)
    nets = {}
    for name in NETWORK_FILES:
        path = directory / f"{name}.params"
        nets[name] = nn.load_params(path) if path.exists() else None
    missing = [n for n in NETWORK_FILES[:4] if nets[n] is None]
    if missing:
        raise PreconditionError(f"checkpoint {directory} is missing {', '.join(missing)}")
    state = AgentState(
        actor=nets["actor"],
        actor_target=nets["actor_target"],
        critic1=nets["critic1"],
        critic1_target=nets["critic1_target"],
        actor_opt=AdamState.fresh(nets["actor"], cfg.actor_lr),
        critic1_opt=AdamState.fresh(nets["critic1"], cfg.critic_lr),
        critic2=nets["critic2"],
        critic2_target=nets["critic2_target"],
    )
    if state.critic2 is not None:
        state.critic2_opt = AdamState.fresh(state.critic2, cfg.critic_lr)
    return state
