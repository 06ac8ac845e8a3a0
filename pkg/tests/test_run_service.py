"""
Tests for the training run orchestration.
학습 실행 서비스 테스트.
"""
import numpy as np
import pytest

from app.core.config import settings
from app.core.exceptions import DivergenceError
from app.core.result import ConfigurationError, DivergenceFailure, Err, InvalidDataError, Ok
from app.infrastructure.checkpoint_store import load_checkpoint
from app.infrastructure.envs import QuadraticBandit
from app.repositories.metrics_repository import load_table
from app.schemas.metrics import METRICS_HEADER
from app.schemas.run_config import CemConfig, GracConfig, RunConfig
from app.services import networks as nets
from app.services import run_service
from app.services.run_executor import RunExecutor
from app.services.run_service import STEP_KEY, RunService, evaluate, evaluate_run, run_training


def _tiny(out_dir, **overrides) -> RunConfig:
    base = dict(
        env="quadratic-bandit",
        total_steps=6,
        eval_interval=3,
        eval_episodes=2,
        seed=1,
        output_dir=str(out_dir),
        grac=GracConfig(
            batch_size=4,
            hidden_dim=8,
            K=3,
            warmup_steps=2,
            cem=CemConfig(n_pop=16, n_elite=3, n_iter=2),
        ),
    )
    base.update(overrides)
    return RunConfig(**base)


def _ok(result):
    match result:
        case Ok(value):
            return value
        case Err():
            raise AssertionError(f"run failed: {result.error_message}")


def test_zero_steps_writes_header_and_final_checkpoint(tmp_path):
    summary = _ok(run_training(_tiny(tmp_path, total_steps=0)))
    assert summary.eval_rows == 0
    assert (tmp_path / "metrics.csv").read_text() == ",".join(METRICS_HEADER) + "\n"
    assert (tmp_path / "config.txt").exists()
    assert load_checkpoint(tmp_path / "checkpoints" / "final.ckpt")[STEP_KEY][0] == 0.0


def test_tiny_run_writes_one_row_per_interval(tmp_path):
    seen = []
    summary = _ok(run_training(_tiny(tmp_path), on_step=seen.append))
    header, rows = load_table(tmp_path / "metrics.csv")
    assert header == METRICS_HEADER
    assert [row["step"] for row in rows] == ["3", "6"]
    assert all(np.isfinite(float(row["eval_return_mean"])) for row in rows)
    assert summary.steps_completed == 6
    assert summary.eval_rows == 2
    assert summary.episodes_completed == 6
    assert [m.updated for m in seen] == [False, False, True, True, True, True]


def test_identical_seeds_give_identical_metrics(tmp_path):
    _ok(run_training(_tiny(tmp_path / "a")))
    _ok(run_training(_tiny(tmp_path / "b")))
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_evaluate_zero_actor_on_bandit(rng):
    phi = {k: np.zeros_like(v) for k, v in nets.init_actor(1, 1, rng, hidden_dim=8).items()}
    mean, std = evaluate(phi, QuadraticBandit(), episodes=3, seed=0, max_action=1.0)
    assert mean == pytest.approx(-0.09)
    assert std == pytest.approx(0.0, abs=1e-12)


def test_divergence_writes_marker_row_and_stops(tmp_path, monkeypatch):
    real_step = run_service.train_step

    def diverge_at_five(world, cfg, step, total_steps, cem_loss_weight):
        if step == 4:
            raise DivergenceError("critic loss is not finite")
        return real_step(world, cfg, step, total_steps, cem_loss_weight)

    monkeypatch.setattr(run_service, "train_step", diverge_at_five)
    result = run_training(_tiny(tmp_path))
    assert isinstance(result, Err)
    assert isinstance(result.error_type, DivergenceFailure)
    assert result.exit_code == 2
    _, rows = load_table(tmp_path / "metrics.csv")
    assert [(row["step"], row["eval_return_mean"]) for row in rows[1:]] == [("5", "diverged")]
    assert rows[0]["step"] == "3"
    assert "Run diverged at step 5" in (tmp_path / "train.log").read_text()


def test_divergence_is_not_retried(tmp_path, monkeypatch):
    calls = []

    def always_diverge(*args, **kwargs):
        calls.append(1)
        raise DivergenceError("boom")

    monkeypatch.setattr(run_service, "train_step", always_diverge)
    service = RunService(RunExecutor(max_retries=3, initial_delay=0.0))
    result = service.train(_tiny(tmp_path))
    assert isinstance(result.error_type, DivergenceFailure)
    assert len(calls) == 1


def test_resume_appends_to_existing_metrics(tmp_path):
    _ok(run_training(_tiny(tmp_path, total_steps=3)))
    checkpoint = tmp_path / "checkpoints" / "final.ckpt"
    assert load_checkpoint(checkpoint)[STEP_KEY][0] == 3.0

    summary = _ok(run_training(_tiny(tmp_path, resume_from=str(checkpoint))))
    _, rows = load_table(tmp_path / "metrics.csv")
    assert [row["step"] for row in rows] == ["3", "6"]
    assert summary.steps_completed == 6
    assert load_checkpoint(checkpoint)[STEP_KEY][0] == 6.0


def test_periodic_checkpoints(tmp_path):
    _ok(run_training(_tiny(tmp_path, checkpoint_interval=2)))
    names = sorted(p.name for p in (tmp_path / "checkpoints").iterdir())
    assert names == ["final.ckpt", "step_00000002.ckpt", "step_00000004.ckpt", "step_00000006.ckpt"]


def test_resume_from_missing_checkpoint(tmp_path):
    result = run_training(_tiny(tmp_path, resume_from=str(tmp_path / "nope.ckpt")))
    assert isinstance(result.error_type, InvalidDataError)
    assert result.exit_code == 1


def test_evaluate_run_uses_saved_config_and_checkpoint(tmp_path):
    _ok(run_training(_tiny(tmp_path)))
    summary = _ok(evaluate_run(tmp_path, episodes=4))
    assert summary.episodes == 4
    assert summary.seed == 1 + settings.EVAL_SEED_OFFSET
    assert summary.return_mean <= 0.0

    again = _ok(RunService(RunExecutor(max_retries=1)).evaluate(tmp_path, episodes=4, seed=summary.seed))
    assert again.return_mean == summary.return_mean


def test_evaluate_run_without_config(tmp_path):
    result = evaluate_run(tmp_path / "empty", episodes=1)
    assert isinstance(result.error_type, ConfigurationError)


def test_transient_failure_resumes_from_latest_checkpoint(tmp_path, monkeypatch):
    real_train_step = run_service.train_step
    steps = []

    def fail_once_at_step_seven(world, grac, t, total_steps, cem_loss_weight):
        steps.append(t + 1)
        if t + 1 == 7 and steps.count(7) == 1:
            raise OSError("disk full")
        return real_train_step(world, grac, t, total_steps, cem_loss_weight)

    monkeypatch.setattr(run_service, "train_step", fail_once_at_step_seven)
    service = RunService(RunExecutor(max_retries=2, initial_delay=0.0))
    summary = _ok(service.train(_tiny(tmp_path, total_steps=8, eval_interval=2, checkpoint_interval=4)))

    assert steps == [1, 2, 3, 4, 5, 6, 7, 5, 6, 7, 8]
    _, rows = load_table(tmp_path / "metrics.csv")
    assert [row["step"] for row in rows] == ["2", "4", "6", "8"]
    assert summary.steps_completed == 8
    assert "step_00000004.ckpt" in (tmp_path / "config.txt").read_text()
    assert load_checkpoint(tmp_path / "checkpoints" / "final.ckpt")[STEP_KEY][0] == 8.0


def test_transient_failure_before_any_checkpoint_restarts_from_scratch(tmp_path, monkeypatch):
    real_train_step = run_service.train_step
    steps = []

    def fail_once_at_step_two(world, grac, t, total_steps, cem_loss_weight):
        steps.append(t + 1)
        if t + 1 == 2 and steps.count(2) == 1:
            raise OSError("disk full")
        return real_train_step(world, grac, t, total_steps, cem_loss_weight)

    monkeypatch.setattr(run_service, "train_step", fail_once_at_step_two)
    service = RunService(RunExecutor(max_retries=2, initial_delay=0.0))
    _ok(service.train(_tiny(tmp_path, checkpoint_interval=4)))

    assert steps[:3] == [1, 2, 1]
    _, rows = load_table(tmp_path / "metrics.csv")
    assert [row["step"] for row in rows] == ["3", "6"]
