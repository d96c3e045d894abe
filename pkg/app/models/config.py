from typing import Any, Dict, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class AgentConfig(BaseModel):
    """Hyper-parameters and mechanism toggles covering DDPG, TD3 and DDPG++."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    gamma: float = Field(0.99, gt=0.0, lt=1.0)
    tau: float = Field(0.005, gt=0.0, le=1.0)
    actor_lr: float = Field(3e-4, gt=0.0)
    critic_lr: float = Field(3e-4, gt=0.0)
    batch_size: int = Field(100, ge=1)
    # Fraction of the control half-range
    exploration_noise_std: float = Field(0.2, ge=0.0)
    burn_in: int = Field(1000, ge=0)
    hidden_sizes: Tuple[int, ...] = (256, 256)

    twin_critics: bool = True
    policy_delay: int = Field(1, ge=1)
    target_noise_std: float = Field(0.0, ge=0.0)
    target_noise_clip: float = Field(0.0, ge=0.0)
    use_propensity: bool = False
    actor_uses_min: bool = True

    propensity_c: float = Field(1e-3, ge=0.0)
    propensity_iters: int = Field(100, ge=1)

    @field_validator("hidden_sizes", mode="before")
    @classmethod
    def _split_sizes(cls, v):
        if isinstance(v, str):
            return tuple(int(s) for s in v.replace(" ", "").split(",") if s)
        return v

    @field_validator("hidden_sizes")
    @classmethod
    def _positive_sizes(cls, v):
        if not v or any(s < 1 for s in v):
            raise ValueError("hidden_sizes must be a non-empty list of positive widths")
        return v

    @model_validator(mode="after")
    def _propensity_needs_pairs(self):
        if self.use_propensity and self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 when use_propensity is on")
        return self


class RunConfig(BaseModel):
    """One training run: environment, algorithm preset, overrides and bookkeeping."""

    model_config = ConfigDict(extra="forbid")

    env: str = "lqr2d"
    algo: str = "ddpgpp"
    overrides: Dict[str, Any] = Field(default_factory=dict)
    total_env_steps: int = Field(30_000, ge=0)
    eval_every: int = Field(5_000, ge=1)
    eval_episodes: int = Field(10, ge=1)
    seed: int = Field(0, ge=0)
    out_dir: str = "runs/default"
    gamma: float = Field(0.99, gt=0.0, lt=1.0)
    tau: float = Field(0.005, gt=0.0, le=1.0)
    replay_capacity: int = Field(1_000_000, ge=1)
    process_noise_std: float = Field(0.0, ge=0.0)
    # Discounting for logged eval returns; None logs the plain episode reward sum
    eval_discount: Optional[float] = Field(None, gt=0.0, le=1.0)
    log_wall_time: bool = False
    max_consecutive_skips: int = Field(50, ge=1)
    eval_workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _eval_within_run(self):
        if self.total_env_steps > 0 and self.eval_every > self.total_env_steps:
            raise ValueError(
                f"eval_every ({self.eval_every}) exceeds total_env_steps ({self.total_env_steps})"
            )
        return self
