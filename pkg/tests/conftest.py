import numpy as np
import pytest

from app.db.registry import registry
from app.models.config import AgentConfig
from app.services import nn


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_net(rng):
    """3 -> 5 -> 4 -> 2 rectified-linear net with an identity output."""
    return nn.init_mlp([3, 5, 4, 2], ["relu", "relu", "identity"], rng)


@pytest.fixture
def small_agent_config():
    return AgentConfig(
        hidden_sizes=(16, 16),
        batch_size=8,
        burn_in=20,
        actor_lr=1e-3,
        critic_lr=1e-3,
    )


@pytest.fixture
def tiny_run_values(tmp_path):
    return {
        "env": "lqr2d",
        "algo": "ddpgpp",
        "seed": 0,
        "total_env_steps": 60,
        "eval_every": 30,
        "eval_episodes": 2,
        "out_dir": str(tmp_path / "run"),
        "hidden_sizes": "8,8",
        "batch_size": 8,
        "burn_in": 20,
    }


@pytest.fixture(autouse=True)
def clean_registry():
    registry.clear()
    yield
    registry.clear()
