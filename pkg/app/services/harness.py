"""
Collect/update loop, evaluation protocol, checkpoints and config files.

Every random draw comes from a named stream of the run's SeedTree, so a run is
reproduced bit for bit by its config file and seed.
"""
import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import ConfigError, NumericalError, PreconditionError
from app.core.rng import SeedTree
from app.models.config import AgentConfig, RunConfig
from app.models.records import CSV_COLUMNS, NO_ACCURACY, EvalRecord
from app.services import agent as agent_service
from app.services import nn
from app.services.agent import AgentState
from app.services.envs import make_env, rollout_return
from app.services.replay import ReplayBuffer, Transition

logger = logging.getLogger("harness")

CONFIG_FILE = "config.txt"
PROGRESS_FILE = "progress.csv"
CHECKPOINT_DIR = "checkpoint"

RUN_KEYS = [k for k in RunConfig.model_fields if k != "overrides"]
AGENT_KEYS = list(AgentConfig.model_fields)


def parse_config_text(text: str) -> Dict[str, str]:
    """Flat 'key = value' lines; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{raw.strip()}'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        values[key] = value
    return values


def load_config_file(path) -> Dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return parse_config_text(text)


def parse_overrides(pairs: Sequence[str]) -> Dict[str, str]:
    values = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override '{pair}' is not of the form key=value")
        key, value = (s.strip() for s in pair.split("=", 1))
        values[key] = value
    return values


def build_run_config(values: Dict[str, Any]) -> RunConfig:
    """Split flat key/values into RunConfig fields and AgentConfig overrides, then validate."""
    run_values: Dict[str, Any] = {}
    overrides: Dict[str, Any] = dict(values.get("overrides") or {})
    for key, value in values.items():
        if key == "overrides":
            continue
        if key in RUN_KEYS:
            run_values[key] = value
        elif key in AGENT_KEYS:
            overrides[key] = value
        else:
            raise ConfigError(f"Unknown configuration key '{key}'")
    if run_values.get("eval_discount") in ("", "none", "None"):
        run_values["eval_discount"] = None
    try:
        cfg = RunConfig(overrides=overrides, **run_values)
    except ValidationError as e:
        raise ConfigError(f"Invalid run configuration: {e}") from e
    # Fails early on unknown env/algo names and bad agent values
    make_env(cfg.env)
    agent_config(cfg)
    return cfg


def agent_config(cfg: RunConfig) -> AgentConfig:
    """Preset for cfg.algo, then the run's gamma/tau, then per-key overrides."""
    base = agent_service.preset(cfg.algo)
    values = base.model_dump()
    values.update(gamma=cfg.gamma, tau=cfg.tau)
    for key, value in cfg.overrides.items():
        if key not in AGENT_KEYS:
            raise ConfigError(f"Unknown agent configuration key '{key}'")
        values[key] = value
    try:
        return AgentConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid agent configuration: {e}") from e


def _format_value(value: Any) -> str:
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_echo(cfg: RunConfig) -> str:
    """Full effective configuration as a re-runnable config file."""
    acfg = agent_config(cfg)
    lines = ["# effective configuration", "# run"]
    dumped = cfg.model_dump()
    lines += [f"{key} = {_format_value(dumped[key])}" for key in RUN_KEYS]
    lines.append("# agent")
    agent_values = acfg.model_dump()
    lines += [f"{key} = {_format_value(agent_values[key])}" for key in AGENT_KEYS if key not in ("gamma", "tau")]
    return "\n".join(lines) + "\n"


def output_dir(cfg: RunConfig) -> Path:
    return settings.resolve_output(cfg.out_dir)


def save_checkpoint(directory, state: AgentState, cfg: RunConfig) -> Path:
    directory = Path(directory)
    ckpt = directory / CHECKPOINT_DIR
    agent_service.save_agent(ckpt, state)
    (ckpt / CONFIG_FILE).write_text(config_echo(cfg), encoding="utf-8")
    return ckpt


def load_checkpoint(directory) -> Tuple[AgentState, RunConfig]:
    """Accepts a run directory or its checkpoint subdirectory."""
    directory = Path(directory)
    if (directory / CHECKPOINT_DIR).is_dir():
        directory = directory / CHECKPOINT_DIR
    if not (directory / CONFIG_FILE).exists():
        raise ConfigError(f"{directory} holds no {CONFIG_FILE}; not a checkpoint")
    cfg = build_run_config(load_config_file(directory / CONFIG_FILE))
    return agent_service.load_agent(directory, agent_config(cfg)), cfg


def _episode_return(actor: nn.MlpParams, env_name: str, seed: int, discount: Optional[float], process_noise_std: float) -> float:
    env = make_env(env_name, process_noise_std=process_noise_std)
    ret, _ = rollout_return(env, lambda x: nn.forward(actor, x), SeedTree(seed).generator("episode"), discount)
    return ret


def evaluate(
    actor: nn.MlpParams,
    env_name: str,
    episodes: int,
    seed: int,
    discount: Optional[float] = None,
    episode_seeds: Optional[Sequence[int]] = None,
    workers: int = 1,
    process_noise_std: float = 0.0,
) -> Tuple[float, float, List[float]]:
    """
    Deterministic-policy returns, no exploration and no learning.

    Each episode runs on its own environment with its own seed, so the
    reduction does not depend on the order episodes finish in.
    """
    if episodes < 1:
        raise PreconditionError(f"episodes must be at least 1, got {episodes}")
    make_env(env_name)
    if episode_seeds is None:
        tree = SeedTree(seed)
        episode_seeds = [tree.child_seed("eval", i) for i in range(episodes)]
    elif len(episode_seeds) != episodes:
        raise PreconditionError(f"{len(episode_seeds)} episode seeds for {episodes} episodes")
    actor = actor.copy()

    def run(s: int) -> float:
        return _episode_return(actor, env_name, s, discount, process_noise_std)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            returns = list(pool.map(run, episode_seeds))
    else:
        returns = [run(s) for s in episode_seeds]
    arr = np.asarray(returns)
    return float(arr.mean()), float(arr.std()), returns


def random_policy_baseline(env_name: str, episodes: int, seed: int) -> Tuple[float, float]:
    """Mean and std of episode returns under uniform-random controls."""
    tree = SeedTree(seed)
    returns = []
    for i in range(episodes):
        env = make_env(env_name)
        controls = tree.generator("random-policy", i)
        ret, _ = rollout_return(
            env,
            lambda x: controls.uniform(env.spec.control_low, env.spec.control_high),
            tree.generator("random-env", i),
        )
        returns.append(ret)
    arr = np.asarray(returns)
    return float(arr.mean()), float(arr.std())


def estimate_q_bias(state: AgentState, env_name: str, gamma: float, episodes: int, seed: int) -> float:
    """Mean of q1(x0, u(x0)) minus the discounted return actually obtained from x0."""
    tree = SeedTree(seed)
    gaps = []
    for i in range(episodes):
        env = make_env(env_name)
        ret, x0 = rollout_return(env, lambda x: nn.forward(state.actor, x), tree.generator("q-bias", i), gamma)
        u0 = nn.forward(state.actor, x0)
        q0 = float(nn.forward(state.critic1, np.concatenate([x0, u0]))[0])
        gaps.append(q0 - ret)
    return float(np.mean(gaps))


class _ProgressWriter:
    """Appends EvalRecords to progress.csv, flushing after each row."""

    def __init__(self, path: Path):
        self._f = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._f, lineterminator="\n")
        self._writer.writerow(CSV_COLUMNS)
        self._f.flush()

    def write(self, record: EvalRecord) -> None:
        self._writer.writerow(record.csv_row())
        self._f.flush()

    def close(self) -> None:
        self._f.close()


class _RunningMeans:
    def __init__(self):
        self.reset()

    def reset(self):
        self.q1 = self.q2 = 0.0
        self.n_critic = 0
        self.beta = self.acc = 0.0
        self.n_actor = 0
        self.n_acc = 0

    def add(self, diag) -> None:
        self.q1 += diag.mean_q1
        self.q2 += diag.mean_q2
        self.n_critic += 1
        if diag.actor_updated:
            self.beta += diag.mean_beta_tilde
            self.n_actor += 1
            if diag.classifier_accuracy != NO_ACCURACY:
                self.acc += diag.classifier_accuracy
                self.n_acc += 1

    def snapshot(self) -> Dict[str, float]:
        return {
            "mean_q1": self.q1 / self.n_critic if self.n_critic else 0.0,
            "mean_q2": self.q2 / self.n_critic if self.n_critic else 0.0,
            "mean_beta_tilde": self.beta / self.n_actor if self.n_actor else 1.0,
            "classifier_accuracy": self.acc / self.n_acc if self.n_acc else NO_ACCURACY,
        }


def train(cfg: RunConfig, out: Optional[Path] = None, progress_callback=None) -> Tuple[List[EvalRecord], AgentState]:
    """
    Interleaved collect/update loop with one gradient step per environment step
    after burn-in; evaluates every eval_every steps and checkpoints at the end.
    """
    acfg = agent_config(cfg)
    out = Path(out) if out is not None else output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_FILE).write_text(config_echo(cfg), encoding="utf-8")

    tree = SeedTree(cfg.seed)
    env = make_env(cfg.env, process_noise_std=cfg.process_noise_std)
    env_rng = tree.generator("env")
    explore_rng = tree.generator("exploration")
    batch_rng = tree.generator("batch-sampling")
    eval_seed = tree.child_seed("eval")

    state = agent_service.init_agent(env.spec, acfg, tree.generator("agent-init"))
    buffer = ReplayBuffer(
        env.spec.state_dim,
        env.spec.control_dim,
        capacity=cfg.replay_capacity,
        control_low=env.spec.control_low,
        control_high=env.spec.control_high,
    )
    logger.info(f"Training {cfg.algo} on {cfg.env} for {cfg.total_env_steps} steps (seed {cfg.seed}) into {out}")

    records: List[EvalRecord] = []
    means = _RunningMeans()
    writer = _ProgressWriter(out / PROGRESS_FILE)
    start = time.monotonic()
    skips = 0
    try:
        x = env.reset(env_rng)
        for t in range(cfg.total_env_steps):
            u = agent_service.select_action(state, x, acfg, explore=True, rng=explore_rng, env_step=t)
            result = env.step(u)
            buffer.push(Transition(x=x, u=u, r=result.r, x_next=result.x_next, terminal=result.terminal))
            x = env.reset(env_rng) if (result.terminal or result.truncated) else result.x_next

            if t >= acfg.burn_in and buffer.count >= acfg.batch_size:
                diag = agent_service.train_step(state, buffer, acfg, batch_rng)
                means.add(diag)
                skips = skips + 1 if diag.critic_skipped else 0
                if skips >= cfg.max_consecutive_skips:
                    raise NumericalError(
                        f"{skips} consecutive critic updates skipped at step {t + 1}; training diverged"
                    )

            if (t + 1) % cfg.eval_every == 0:
                mean, std, _ = evaluate(
                    state.actor, cfg.env, cfg.eval_episodes, eval_seed,
                    discount=cfg.eval_discount, workers=cfg.eval_workers,
                    process_noise_std=cfg.process_noise_std,
                )
                elapsed = time.monotonic() - start
                record = EvalRecord(
                    env_steps=t + 1,
                    return_mean=mean,
                    return_std=std,
                    wall_seconds=elapsed if cfg.log_wall_time else 0.0,
                    **means.snapshot(),
                )
                means.reset()
                records.append(record)
                writer.write(record)
                logger.info(
                    f"step {record.env_steps}: return {mean:.3f} +- {std:.3f}, "
                    f"q1 {record.mean_q1:.3f}, q2 {record.mean_q2:.3f}, "
                    f"beta {record.mean_beta_tilde:.3f}, acc {record.classifier_accuracy:.3f} ({elapsed:.1f}s)"
                )
                if progress_callback is not None:
                    progress_callback(record)
    except NumericalError as e:
        logger.error(f"Run aborted: {str(e)}; partial progress kept in {out / PROGRESS_FILE}")
        raise
    finally:
        writer.close()

    save_checkpoint(out, state, cfg)
    logger.info(f"Finished {cfg.total_env_steps} steps in {time.monotonic() - start:.1f}s")
    return records, state
