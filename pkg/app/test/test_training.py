import json
import math
import os
from dataclasses import replace

import numpy as np
import pytest

from app.core.config import settings
from app.services import training_service
from app.services.evaluation_service import evaluate_windows
from app.services.training_service import (
    DIVERGED_CHECKPOINT_NAME, EarlyStopping, run_training, steps_per_epoch, train,
)
from axial.checkpoint import read_checkpoint
from axial.errors import DivergenceError, EmptyInputError
from axial.model import init


def cosine(t, total):
    return 0.5 * (1 + math.cos(math.pi * t / total))


def test_steps_per_epoch(tiny_config):
    assert steps_per_epoch(100, replace(tiny_config.train, max_steps_per_epoch=0)) == 7
    assert steps_per_epoch(100, tiny_config.train) == 4


def test_lr_trace_follows_cosine_schedule(prepared_data, tiny_config):
    config = replace(tiny_config.train, epochs=4, max_steps_per_epoch=4)
    state = train(init(tiny_config.model), prepared_data.train, prepared_data.validation, config)
    total = 16
    assert state.t_total == total and state.t_cur == total
    trace = dict(state.lr_trace)
    for t in (0, total // 4, total // 2, 3 * total // 4, total):
        assert trace[t] == pytest.approx(cosine(t, total), abs=1e-12)
    assert trace[total] == 0.0
    for entry in state.history:
        assert entry.lr == pytest.approx(config.base_lr * trace[entry.step - 1])


def test_early_stopping_scripted_plateau():
    early = EarlyStopping(patience=10)
    losses = [1.0 - 0.01 * e for e in range(13)] + [0.9] * 20
    stopped = None
    for epoch, loss in enumerate(losses):
        if early.update(epoch, loss):
            stopped = epoch
            break
    assert stopped == 22
    assert early.best_epoch == 12
    assert early.epochs_since_improvement == 10


def test_equal_loss_is_not_an_improvement():
    early = EarlyStopping(patience=2)
    assert not early.update(0, 1.0)
    assert not early.update(1, 1.0)
    assert early.update(2, 1.0)
    assert early.best_epoch == 0


def test_training_stops_after_patience(monkeypatch, prepared_data, tiny_config):
    def flat_validation(model, windows, batch_size=None):
        return 1.0, np.zeros(len(windows), dtype=np.int64)

    monkeypatch.setattr(training_service, "evaluate_windows", flat_validation)
    config = replace(tiny_config.train, epochs=30, max_steps_per_epoch=1, early_stop_patience=10)
    state = train(init(tiny_config.model), prepared_data.train, prepared_data.validation, config)
    assert state.stopped_early
    assert state.epoch == 10
    assert state.best_epoch == 0
    assert len(state.history) == 11


def test_gates_frozen_until_unfreeze_epoch(monkeypatch, prepared_data, tiny_config):
    snapshots = []

    def spy(model, windows, batch_size=None):
        snapshots.append([g.data.copy() for g in model.gates()])
        return evaluate_windows(model, windows, batch_size)

    monkeypatch.setattr(training_service, "evaluate_windows", spy)
    config = replace(tiny_config.train, epochs=7, gate_unfreeze_epoch=5, max_steps_per_epoch=4, base_lr=0.05)
    model = init(tiny_config.model)
    initial = [g.data.copy() for g in model.gates()]
    train(model, prepared_data.train, prepared_data.validation, config)

    assert len(snapshots) == 7
    for epoch in range(5):
        for before, after in zip(initial, snapshots[epoch]):
            assert before.tobytes() == after.tobytes()
    assert any(not np.array_equal(before, after) for before, after in zip(initial, snapshots[5]))


def test_frozen_gates_keep_zero_momentum(prepared_data, tiny_config):
    config = replace(tiny_config.train, epochs=2, gate_unfreeze_epoch=2)
    model = init(tiny_config.model)
    state = train(model, prepared_data.train, prepared_data.validation, config)
    gate_ids = {id(g) for g in model.gates()}
    for param, buffer in zip(model.parameters(), state.buffers):
        assert buffer.shape == param.shape
        if id(param) in gate_ids:
            assert not buffer.any()


def test_training_is_deterministic(prepared_data, tiny_config):
    runs = []
    for _ in range(2):
        model = init(tiny_config.model, seed=4)
        state = train(model, prepared_data.train, prepared_data.validation, tiny_config.train)
        runs.append((state.step_losses, model.state_dict()))
    assert runs[0][0] == runs[1][0]
    for name, value in runs[0][1].items():
        assert value.tobytes() == runs[1][1][name].tobytes(), name


def test_overfits_a_small_subset(prepared_data, tiny_config):
    subset = prepared_data.train.subset(np.arange(32))
    config = replace(tiny_config.train, epochs=30, batch_size=32, base_lr=0.05, gate_unfreeze_epoch=0)
    state = train(init(tiny_config.model), subset, subset, config)
    assert state.history[-1].train_loss < state.history[0].train_loss


def test_best_weights_are_restored(prepared_data, tiny_config, tmp_path):
    model = init(tiny_config.model)
    state = train(model, prepared_data.train, prepared_data.validation, tiny_config.train, str(tmp_path))
    val_loss, _ = evaluate_windows(model, prepared_data.validation)
    assert val_loss == pytest.approx(state.best_val_loss, rel=1e-6)
    stored = read_checkpoint(str(tmp_path / settings.CHECKPOINT_NAME)).parameters
    for name, param in model.named_parameters():
        assert stored[name].tobytes() == param.data.astype(np.float32).tobytes()


def test_divergence_writes_snapshot(prepared_data, tiny_config, tmp_path):
    model = init(tiny_config.model)
    model.head.weight.data[...] = np.nan
    with pytest.raises(DivergenceError) as excinfo:
        train(model, prepared_data.train, prepared_data.validation, tiny_config.train, str(tmp_path))
    assert excinfo.value.exit_code == 4
    assert excinfo.value.snapshot_path == str(tmp_path / DIVERGED_CHECKPOINT_NAME)
    assert os.path.isfile(excinfo.value.snapshot_path)


def test_empty_validation_set(prepared_data, tiny_config):
    with pytest.raises(EmptyInputError):
        train(init(tiny_config.model), prepared_data.train, prepared_data.validation.subset([]), tiny_config.train)


def test_run_training_artifacts_are_reproducible(tiny_config, prepared_data, tmp_path):
    first = run_training(tiny_config, str(tmp_path / "a"), prepared_data)
    second = run_training(tiny_config, str(tmp_path / "b"), prepared_data)

    for name in (settings.RUN_CONFIG_NAME, settings.INITIAL_CHECKPOINT_NAME, settings.CHECKPOINT_NAME,
                 settings.METRICS_LOG_NAME, "test_metrics.json"):
        a, b = tmp_path / "a" / name, tmp_path / "b" / name
        assert a.read_bytes() == b.read_bytes(), name

    lines = (tmp_path / "a" / settings.METRICS_LOG_NAME).read_text().splitlines()
    assert len(lines) == tiny_config.train.epochs
    assert set(json.loads(lines[0])) == {"epoch", "step", "lr", "train_loss", "val_loss", "val_f1_macro"}
    assert (tmp_path / "a" / settings.RUN_CONFIG_NAME).read_text() == tiny_config.canonical_text()
    assert first.test_report.metadata.config_hash == tiny_config.config_hash()
    assert first.test_report.macro_f1 == second.test_report.macro_f1

    contents = read_checkpoint(str(tmp_path / "a" / settings.CHECKPOINT_NAME))
    assert contents.config_text == tiny_config.canonical_text()
    assert {"norm.mean", "norm.std"} <= set(contents.buffers)
