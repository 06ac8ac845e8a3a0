"""
Tests for the key=value configuration loader.
"""
import pytest

from app.core.exceptions import ConfigParseError
from app.schemas.run_config import RunConfig
from app.services.config_loader import dump_config, parse_config, resolve_cem_loss_weight, valid_keys


@pytest.fixture
def write_config(tmp_path):
    def _write(text: str):
        path = tmp_path / "run.cfg"
        path.write_text(text, encoding="utf-8")
        return path

    return _write


def test_defaults_without_file():
    cfg = parse_config(None)
    assert cfg.env == "pendulum"
    assert cfg.grac.K == 20
    assert cfg.grac.cem.n_pop == 256
    assert cfg.grac.cem_loss_weight == pytest.approx(1.0)


def test_file_values_comments_and_blank_lines(write_config):
    path = write_config(
        "# 작은 실험\n"
        "env = quadratic-bandit\n"
        "\n"
        "total_steps = 300   # 짧게\n"
        "eval_interval = 100\n"
        "n_pop = 32\n"
        "n_cem = 3\n"
        "use_maxmin = false\n"
    )
    cfg = parse_config(path)
    assert cfg.env == "quadratic-bandit"
    assert cfg.total_steps == 300
    assert cfg.grac.cem.n_pop == 32
    assert cfg.grac.cem.n_iter == 3
    assert cfg.grac.use_maxmin is False


def test_cli_overrides_beat_file(write_config):
    path = write_config("gamma = 0.9\nbatch_size = 16\n")
    cfg = parse_config(path, ["--gamma=0.5", "--batch-size=8"])
    assert cfg.grac.gamma == 0.5
    assert cfg.grac.batch_size == 8


def test_mapping_overrides():
    assert parse_config(None, {"seed": "7"}).seed == 7


def test_preset_applies_profile_but_explicit_keys_win(write_config):
    cfg = parse_config(write_config("preset = Hopper-v2\nK = 5\n"))
    assert cfg.grac.K == 5
    assert cfg.grac.alpha_start == pytest.approx(0.85)
    assert cfg.grac.alpha_end == pytest.approx(0.95)
    assert cfg.grac.cem_loss_weight == pytest.approx(0.3)


def test_ant_preset_uses_corrected_alpha_range():
    cfg = parse_config(None, ["--preset=Ant-v2"])
    assert (cfg.grac.alpha_start, cfg.grac.alpha_end) == (0.7, 0.85)


def test_explicit_cem_loss_weight_is_kept():
    assert parse_config(None, ["--cem_loss_weight=0.25"]).grac.cem_loss_weight == 0.25


def test_unknown_key_lists_valid_keys(write_config):
    with pytest.raises(ConfigParseError) as info:
        parse_config(write_config("gamma = 0.9\nlearning_rate = 0.1\n"))
    message = str(info.value)
    assert "line 2" in message
    assert "learning_rate" in message
    assert "gamma" in message
    assert info.value.context["valid_keys"] == valid_keys()


def test_type_mismatch_names_the_line(write_config):
    with pytest.raises(ConfigParseError) as info:
        parse_config(write_config("env = pendulum\n\ntotal_steps = lots\n"))
    assert "line 3" in str(info.value)
    assert info.value.context["line"] == 3


def test_line_without_equals_sign(write_config):
    with pytest.raises(ConfigParseError):
        parse_config(write_config("gamma 0.9\n"))


def test_scientific_notation_for_integers():
    assert parse_config(None, ["--buffer_size=1e6"]).grac.buffer_size == 1_000_000
    with pytest.raises(ConfigParseError):
        parse_config(None, ["--buffer_size=1.5"])


def test_none_clears_optional_values():
    assert parse_config(None, ["--resume_from=none"]).resume_from is None


@pytest.mark.parametrize(
    "overrides",
    [
        ["--n_pop=4", "--n_elite=5"],
        ["--total_steps=10", "--eval_interval=20"],
        ["--env=cartpole"],
        ["--gamma=1.5"],
        ["--preset=Reacher-v2"],
        ["gamma=0.5"],
    ],
)
def test_invalid_configurations_are_rejected(overrides):
    with pytest.raises(ConfigParseError):
        parse_config(None, overrides)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigParseError):
        parse_config(tmp_path / "absent.cfg")


def test_dump_then_parse_reproduces_config(write_config, tmp_path):
    cfg = parse_config(
        None,
        ["--env=double-integrator", "--gamma=0.95", "--use_double_q=false", f"--output_dir={tmp_path}", "--n_elite=7"],
    )
    assert parse_config(write_config(dump_config(cfg))) == cfg


def test_resolve_cem_loss_weight_only_fills_missing_value():
    cfg = RunConfig(env="quadratic-bandit")
    assert cfg.grac.cem_loss_weight is None
    assert resolve_cem_loss_weight(cfg, 0.5).grac.cem_loss_weight == 0.5
    filled = resolve_cem_loss_weight(cfg)
    assert resolve_cem_loss_weight(filled, 0.5) is filled
