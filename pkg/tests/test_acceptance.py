"""
Desk-scale reproduction runs. Each takes minutes per seed; run with `pytest -m slow`.
"""
import numpy as np
import pytest

from app.core.rng import SeedTree
from app.services import harness
from app.services.envs import DoubleIntegrator, lqr_optimal_return

pytestmark = pytest.mark.slow

SEEDS = [0, 1, 2, 3, 4]
GAMMA = 0.99


def lqr_run(seed, out, **extra):
    values = {
        "env": "lqr2d",
        "algo": "ddpgpp",
        "seed": seed,
        "total_env_steps": 30_000,
        "eval_every": 5_000,
        "eval_episodes": 10,
        "eval_discount": GAMMA,
        "out_dir": str(out),
    }
    values.update(extra)
    return harness.train(harness.build_run_config(values), out=out)


def relative_gap_to_oracle(state, seed) -> float:
    episode_seeds = [SeedTree(seed).child_seed("acceptance", i) for i in range(20)]
    mean, _, _ = harness.evaluate(state.actor, "lqr2d", 20, seed, discount=GAMMA, episode_seeds=episode_seeds)
    x0 = np.stack([DoubleIntegrator().reset(SeedTree(s).generator("episode")) for s in episode_seeds])
    optimum = lqr_optimal_return(DoubleIntegrator(), GAMMA, x0=x0)
    return abs(mean - optimum) / abs(optimum)


def test_lqr_policy_approaches_the_riccati_optimum(tmp_path):
    gaps = [relative_gap_to_oracle(lqr_run(s, tmp_path / f"s{s}")[1], s) for s in SEEDS]
    assert np.median(gaps) <= 0.10
    assert max(gaps) <= 0.25


def test_lqr_runs_are_byte_reproducible(tmp_path):
    lqr_run(SEEDS[0], tmp_path / "a")
    lqr_run(SEEDS[0], tmp_path / "b")
    assert (tmp_path / "a" / harness.PROGRESS_FILE).read_bytes() == (tmp_path / "b" / harness.PROGRESS_FILE).read_bytes()


def test_pendulum_beats_the_random_policy(tmp_path):
    base_mean, base_std = harness.random_policy_baseline("pendulum", 100, seed=0)
    finals = []
    for s in SEEDS:
        cfg = harness.build_run_config({
            "env": "pendulum", "algo": "ddpgpp", "seed": s,
            "total_env_steps": 100_000, "eval_every": 10_000, "eval_episodes": 10,
        })
        records, _ = harness.train(cfg, out=tmp_path / f"s{s}")
        finals.append(records[-1].return_mean)
    assert np.median(finals) - base_mean >= 5.0 * base_std


def test_single_critic_overestimates_more_than_twin_critics(tmp_path):
    wins = 0
    for s in SEEDS:
        _, single = lqr_run(s, tmp_path / f"single{s}", twin_critics="false", actor_uses_min="false")
        _, twin = lqr_run(s, tmp_path / f"twin{s}")
        single_gap = harness.estimate_q_bias(single, "lqr2d", GAMMA, 20, seed=s)
        twin_gap = harness.estimate_q_bias(twin, "lqr2d", GAMMA, 20, seed=s)
        wins += single_gap > twin_gap
    assert wins >= 4


def test_pendulum_propensity_diagnostics_stay_informative_and_stable(tmp_path):
    cfg = harness.build_run_config({
        "env": "pendulum", "algo": "ddpgpp-prop", "seed": 0,
        "total_env_steps": 30_000, "eval_every": 5_000, "eval_episodes": 10,
    })
    records, _ = harness.train(cfg, out=tmp_path / "prop")
    assert len(records) == 6
    for r in records:
        assert 0.5 < r.classifier_accuracy < 1.0
        assert 0.0 <= r.mean_beta_tilde <= 1.0
    steps = np.array([r.env_steps for r in records], dtype=float)
    betas = np.array([r.mean_beta_tilde for r in records])
    slope = np.polyfit(steps, betas, 1)[0]
    assert abs(slope * (steps[-1] - steps[0])) <= 0.2
