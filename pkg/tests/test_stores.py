"""
Tests for the artifact, checkpoint and metrics stores.
"""
import numpy as np
import pytest

from app.core.exceptions import GracError
from app.infrastructure.artifact_store import ArtifactStore
from app.infrastructure.checkpoint_store import (
    CheckpointFormatError,
    decode,
    encode,
    load_checkpoint,
    save_checkpoint,
)
from app.repositories.metrics_repository import MetricsRepository, load_table, parse_number
from app.schemas.metrics import DIVERGED, METRICS_HEADER, MetricsRow


def _row(step, mean=-1.5):
    return MetricsRow(
        step=step, eval_return_mean=mean, eval_return_std=0.25, q1_mean=0.1, q_gap_mean=0.0, critic_iters=2, alpha=0.7
    )


# ----------------------------------------------------------------------
# ArtifactStore
# ----------------------------------------------------------------------
def test_artifact_store_writes_inside_run_dir(tmp_path):
    store = ArtifactStore(tmp_path / "run")
    path = store.write_text("nested/notes.txt", "hello")
    assert path == (tmp_path / "run" / "nested" / "notes.txt").resolve()
    assert store.read_text("nested/notes.txt") == "hello"
    assert store.exists("nested/notes.txt")
    assert store.checkpoint_path(12).name == "step_00000012.ckpt"
    assert store.checkpoint_path().name == "final.ckpt"


def test_artifact_store_blocks_path_traversal(tmp_path):
    store = ArtifactStore(tmp_path / "run")
    with pytest.raises(PermissionError):
        store.write_text("../escape.txt", "x")
    assert not store.exists("../escape.txt")
    assert not (tmp_path / "escape.txt").exists()


def test_subdirectory_store(tmp_path):
    child = ArtifactStore(tmp_path).subdirectory("grac/seed_0")
    assert child.base_path.is_dir()
    assert child.metrics_path.name == "metrics.csv"


def test_latest_checkpoint_ignores_final_and_partial_files(tmp_path):
    store = ArtifactStore(tmp_path)
    assert store.latest_checkpoint() is None
    store.checkpoint_path().parent.mkdir()
    for step in (900, 12000, 3000):
        store.checkpoint_path(step).write_bytes(b"")
    store.checkpoint_path().write_bytes(b"")
    (store.checkpoint_path(15000).parent / "step_00015000.ckpt.tmp").write_bytes(b"")
    assert store.latest_checkpoint() == store.checkpoint_path(12000)


# ----------------------------------------------------------------------
# 체크포인트
# ----------------------------------------------------------------------
def test_checkpoint_roundtrip_is_bit_exact(tmp_path, rng):
    arrays = {
        "actor/l1.W": rng.standard_normal((3, 4)),
        "actor/mu.b": np.array([np.pi, -0.0]),
        "meta/step": np.array([42.0]),
        "scalar": np.array(1e-300),
    }
    restored = load_checkpoint(save_checkpoint(tmp_path / "c" / "x.ckpt", arrays))
    assert list(restored) == list(arrays)
    for name, value in arrays.items():
        assert restored[name].shape == value.shape
        assert restored[name].tobytes() == value.astype(np.float64).tobytes()
    assert not (tmp_path / "c" / "x.ckpt.tmp").exists()


def test_zero_dimensional_array_keeps_its_shape():
    restored = decode(encode({"scale": np.array(1e-300), "grid": np.arange(6.0).reshape(2, 3).T}))
    assert restored["scale"].shape == ()
    assert restored["scale"].item() == 1e-300
    assert np.array_equal(restored["grid"], np.arange(6.0).reshape(2, 3).T)


@pytest.mark.parametrize("blob", [b"", b"NOTACKPT", encode({"w": np.ones(3)})[:-4], encode({"w": np.ones(1)}) + b"\0"])
def test_corrupt_checkpoints_are_rejected(blob):
    with pytest.raises(CheckpointFormatError):
        decode(blob)


# ----------------------------------------------------------------------
# MetricsRepository
# ----------------------------------------------------------------------
def test_metrics_repository_writes_header_and_rows(tmp_path):
    repository = MetricsRepository(tmp_path / "metrics.csv")
    repository.initialize()
    repository.append(_row(10))
    repository.append(_row(20, DIVERGED))
    header, rows = load_table(tmp_path / "metrics.csv")
    assert header == METRICS_HEADER
    assert rows[0]["eval_return_mean"] == "-1.5"
    assert rows[1]["eval_return_mean"] == DIVERGED


def test_metrics_rows_must_increase(tmp_path):
    repository = MetricsRepository(tmp_path / "metrics.csv")
    repository.initialize()
    repository.append(_row(10))
    with pytest.raises(GracError):
        repository.append(_row(10))


def test_append_mode_continues_after_last_step(tmp_path):
    path = tmp_path / "metrics.csv"
    first = MetricsRepository(path)
    first.initialize()
    first.append(_row(10))

    second = MetricsRepository(path)
    second.initialize(append=True)
    with pytest.raises(GracError):
        second.append(_row(5))
    second.append(_row(20))
    assert [r["step"] for r in load_table(path)[1]] == ["10", "20"]


def test_resume_step_drops_rows_written_after_the_checkpoint(tmp_path):
    path = tmp_path / "metrics.csv"
    first = MetricsRepository(path)
    first.initialize()
    for step in (10, 20, 30):
        first.append(_row(step))

    second = MetricsRepository(path)
    second.initialize(append=True, resume_step=20)
    assert [r["step"] for r in load_table(path)[1]] == ["10", "20"]
    second.append(_row(30, mean=-0.5))
    _, rows = load_table(path)
    assert [r["step"] for r in rows] == ["10", "20", "30"]
    assert rows[-1]["eval_return_mean"] == "-0.5"


def test_append_mode_rejects_foreign_header(tmp_path):
    path = tmp_path / "metrics.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(GracError):
        MetricsRepository(path).initialize(append=True)


def test_parse_number():
    assert parse_number("1.5") == 1.5
    assert parse_number(DIVERGED) is None
    assert parse_number("nan") is None
    assert parse_number(None) is None
