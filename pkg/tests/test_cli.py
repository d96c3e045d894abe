import pytest

from app import cli
from app.core.config import settings
from app.services import harness

TINY = ["--set", "hidden_sizes=8,8", "--set", "batch_size=8", "--set", "burn_in=20"]


def run_args(out, *extra):
    return ["run", "--env", "lqr2d", "--algo", "ddpgpp", "--seed", "0", "--steps", "40",
            "--eval-every", "20", "--eval-episodes", "1", "--out", str(out), *TINY, *extra]


def test_run_writes_progress_under_out(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(run_args(out)) == cli.EXIT_OK
    lines = (out / harness.PROGRESS_FILE).read_text().splitlines()
    assert len(lines) == 3
    printed = capsys.readouterr().out
    assert "40 steps: return" in printed
    assert str(out / harness.PROGRESS_FILE) in printed


def test_set_overrides_reach_the_effective_config(tmp_path):
    out = tmp_path / "run"
    assert cli.main(run_args(out, "--set", "policy_delay=2")) == cli.EXIT_OK
    assert "policy_delay = 2" in (out / harness.CONFIG_FILE).read_text()


def test_config_file_is_applied_before_flags(tmp_path):
    config = tmp_path / "base.txt"
    config.write_text("algo = ddpg\nseed = 9\ngamma = 0.95\n")
    out = tmp_path / "run"
    assert cli.main(run_args(out, "--config", str(config))) == cli.EXIT_OK
    text = (out / harness.CONFIG_FILE).read_text()
    # --algo and --seed on the command line win over the file
    assert "algo = ddpgpp" in text and "seed = 0" in text
    assert "gamma = 0.95" in text


def test_eval_prints_mean_and_spread(tmp_path, capsys):
    out = tmp_path / "run"
    cli.main(run_args(out))
    capsys.readouterr()
    assert cli.main(["eval", "--checkpoint", str(out), "--episodes", "2"]) == cli.EXIT_OK
    printed = capsys.readouterr().out
    assert printed.startswith("lqr2d: ") and "+-" in printed


def test_eval_on_another_environment(tmp_path, capsys):
    out = tmp_path / "run"
    cli.main(run_args(out))
    capsys.readouterr()
    assert cli.main(["eval", "--checkpoint", str(out / "checkpoint"), "--episodes", "1", "--env", "lqr2d",
                     "--discount", "0.99"]) == cli.EXIT_OK
    assert "over 1 episodes" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--bogus"],
        ["run", "--env", "cartpole"],
        ["run", "--set", "no_such_key=1"],
        ["eval"],
        ["eval", "--checkpoint", "/nonexistent/run"],
        [],
    ],
)
def test_usage_errors_exit_with_two(argv, tmp_path):
    if argv[:1] == ["run"]:
        argv = argv + ["--out", str(tmp_path / "x")]
    assert cli.main(argv) == cli.EXIT_USAGE


def test_eval_with_zero_episodes_is_a_usage_error(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(run_args(out)) == cli.EXIT_OK
    capsys.readouterr()
    assert cli.main(["eval", "--checkpoint", str(out), "--episodes", "0"]) == cli.EXIT_USAGE
    err = capsys.readouterr().err
    assert "usage:" in err and "episodes must be at least 1" in err


def test_eval_with_missing_network_file_is_a_usage_error(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(run_args(out)) == cli.EXIT_OK
    (out / harness.CHECKPOINT_DIR / "actor.params").unlink()
    capsys.readouterr()
    assert cli.main(["eval", "--checkpoint", str(out)]) == cli.EXIT_USAGE
    assert "is missing actor" in capsys.readouterr().err


def test_eval_with_truncated_network_file_is_a_usage_error(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(run_args(out)) == cli.EXIT_OK
    path = out / harness.CHECKPOINT_DIR / "actor.params"
    path.write_bytes(path.read_bytes()[:-8])
    capsys.readouterr()
    assert cli.main(["eval", "--checkpoint", str(out)]) == cli.EXIT_USAGE
    assert "header implies" in capsys.readouterr().err


def test_help_exits_cleanly(capsys):
    assert cli.main(["--help"]) == cli.EXIT_OK
    assert "run" in capsys.readouterr().out


def test_relative_out_resolves_under_output_root(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "OUTPUT_ROOT", str(tmp_path))
    assert cli.main(run_args("nested/run")) == cli.EXIT_OK
    assert (tmp_path / "nested" / "run" / harness.PROGRESS_FILE).exists()


def test_numerical_failure_exits_with_three(tmp_path, monkeypatch):
    from app.models.records import UpdateDiagnostics
    from app.services import agent

    monkeypatch.setattr(agent, "train_step", lambda *a, **k: UpdateDiagnostics(critic_skipped=True))
    assert cli.main(run_args(tmp_path / "run", "--set", "max_consecutive_skips=2")) == cli.EXIT_NUMERICAL
