"""
Tests for the ablation suite.
"""
import math

import pytest

from app.core.exceptions import DivergenceError
from app.core.result import Ok
from app.repositories.metrics_repository import load_table
from app.schemas.metrics import METRICS_HEADER
from app.schemas.run_config import CemConfig, GracConfig, RunConfig
from app.services import run_service
from app.services.ablation_service import (
    OPTIONAL_VARIANTS,
    SUMMARY_CSV,
    SUMMARY_HEADER,
    VARIANTS,
    AblationService,
    normalized_return,
    summarize_run,
    variant_config,
)
from app.services.run_executor import RunExecutor


@pytest.fixture
def base(tmp_path) -> RunConfig:
    return RunConfig(
        env="quadratic-bandit",
        total_steps=4,
        eval_interval=2,
        eval_episodes=1,
        output_dir=str(tmp_path),
        grac=GracConfig(batch_size=4, hidden_dim=8, K=2, warmup_steps=1, cem=CemConfig(n_pop=8, n_elite=2, n_iter=1)),
    )


@pytest.fixture
def service() -> AblationService:
    return AblationService(RunExecutor(max_retries=1, initial_delay=0.0))


def test_variant_table():
    assert list(VARIANTS) == [
        "grac",
        "grac_wo_critic_cem",
        "grac_qloss_only",
        "grac_cemloss_only",
        "ddpg_target",
        "no_target_no_reg",
        "no_target_with_reg",
    ]
    assert VARIANTS["ddpg_target"]["use_target_network"] is True
    assert VARIANTS["no_target_with_reg"]["use_target_regularization"] is True
    assert "grac_min_q_actor" in OPTIONAL_VARIANTS


def test_variant_config_applies_flags_and_layout(base, tmp_path):
    cfg = variant_config(base.model_copy(update={"resume_from": "x.ckpt"}), "ddpg_target", 3, tmp_path)
    assert cfg.seed == 3
    assert cfg.output_dir == str(tmp_path / "ddpg_target" / "seed_3")
    assert cfg.resume_from is None
    assert cfg.grac.use_target_network and not cfg.grac.use_maxmin and cfg.grac.K == 1
    assert cfg.grac.cem_loss_weight == pytest.approx(1.0)
    assert base.grac.K == 2


def test_summarize_run_with_diverged_row(tmp_path):
    path = tmp_path / "metrics.csv"
    path.write_text(
        ",".join(METRICS_HEADER) + "\n"
        "2,-1.0,0,0.5,0.01,1,0.7\n"
        "4,-3.0,0,-2.5,-0.03,1,0.7\n"
        "5,diverged,0,0,0,0,0.7\n"
    )
    summary = summarize_run(path)
    assert summary["final_return"] == pytest.approx(-2.0)
    assert math.isinf(summary["q1_abs_max"])
    assert summary["q_gap_abs_mean"] == pytest.approx((0.01 + 0.03 + 0.0) / 3)


def test_summarize_run_keeps_last_ten_evaluations(tmp_path):
    path = tmp_path / "metrics.csv"
    rows = [f"{i},{float(i)},0,1,0,1,0.7" for i in range(1, 13)]
    path.write_text(",".join(METRICS_HEADER) + "\n" + "\n".join(rows) + "\n")
    summary = summarize_run(path)
    assert summary["final_return"] == pytest.approx(sum(range(3, 13)) / 10)
    assert summary["q1_abs_max"] == 1.0


def test_every_variant_runs_and_is_normalized(base, service, tmp_path):
    match service.run(base, seeds=[0], include_min_q_variant=True):
        case Ok(summary):
            pass
        case _:
            raise AssertionError("ablation failed")

    assert summary.total == len(VARIANTS) + len(OPTIONAL_VARIANTS)
    assert summary.failed == 0
    assert summary.variants["grac"].normalized == pytest.approx(1.0)
    for name in summary.variants:
        _, rows = load_table(tmp_path / name / "seed_0" / "metrics.csv")
        assert [row["step"] for row in rows] == ["2", "4"]

    header, table = load_table(tmp_path / SUMMARY_CSV)
    assert header == SUMMARY_HEADER
    assert [row["variant"] for row in table] == list(summary.variants)


def test_subset_of_variants_over_several_seeds(base, service, tmp_path):
    result = service.run(base, seeds=[0, 1], variants=["grac", "no_target_no_reg"])
    summary = result.value
    assert summary.total == 4
    assert summary.variants["grac"].seeds == [0, 1]
    assert (tmp_path / "no_target_no_reg" / "seed_1" / "metrics.csv").exists()
    assert not (tmp_path / "ddpg_target").exists()


def test_unknown_variant_is_rejected(base, service):
    with pytest.raises(ValueError):
        service.run(base, seeds=[0], variants=["sac"])


def test_failed_runs_are_reported_and_the_suite_continues(base, service, tmp_path, monkeypatch):
    def always_diverge(*args, **kwargs):
        raise DivergenceError("critic loss is not finite")

    monkeypatch.setattr(run_service, "train_step", always_diverge)
    summary = service.run(base, seeds=[0, 1], variants=["grac", "grac_qloss_only"]).value
    assert summary.failed == 4
    assert summary.failed_runs == ["grac/seed_0", "grac/seed_1", "grac_qloss_only/seed_0", "grac_qloss_only/seed_1"]
    grac = summary.variants["grac"]
    assert grac.failed_seeds == [0, 1]
    assert grac.final_return_mean is None and grac.normalized is None
    assert math.isinf(grac.q1_abs_max)
    assert "inf" in (tmp_path / SUMMARY_CSV).read_text()


def test_normalized_return_orders_cost_returns_like_rewards():
    assert normalized_return(-200.0, -100.0) == pytest.approx(0.0)
    assert normalized_return(-50.0, -100.0) == pytest.approx(1.5)
    assert normalized_return(-100.0, -100.0) == pytest.approx(1.0)
    assert normalized_return(50.0, 100.0) == pytest.approx(0.5)
    assert normalized_return(3.0, 0.0) is None


def test_worse_variant_normalizes_below_one_on_negative_returns(base, service, tmp_path, monkeypatch):
    monkeypatch.setattr(
        "app.services.ablation_service.summarize_run",
        lambda path: {
            "final_return": -400.0 if "no_target_no_reg" in str(path) else -100.0,
            "q1_abs_max": 1.0,
            "q_gap_abs_mean": 0.0,
        },
    )
    summary = service.run(base, seeds=[0], variants=["grac", "no_target_no_reg"]).value
    assert summary.variants["grac"].normalized == pytest.approx(1.0)
    assert summary.variants["no_target_no_reg"].normalized == pytest.approx(-2.0)
    _, table = load_table(tmp_path / SUMMARY_CSV)
    assert float(table[1][SUMMARY_HEADER[2]]) == pytest.approx(-2.0)
