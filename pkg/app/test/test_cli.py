import json
import struct

import numpy as np
import pandas as pd
import pytest

from app.main import REFERENCE_PARAMETER_COUNT, main
from axial.checkpoint import FORMAT_VERSION, MAGIC
from lob.book import LEVELS, LobEventSeries
from lob.ingest import write_canonical_csv

TINY_SETS = [
    "--set", "model.stem_channels=4", "--set", "model.block_channels=4",
    "--set", "train.batch_size=16", "--set", "train.epochs=2", "--set", "train.max_steps_per_epoch=2",
    "--set", "train.gate_unfreeze_epoch=1",
]


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    stream = captured.out if code == 0 else captured.err
    lines = [line for line in stream.splitlines() if line.startswith("{")]
    return code, json.loads(lines[-1])


def constant_book_csv(path, events=200, mid=100.0):
    row = []
    for level in range(LEVELS):
        row += [mid + 0.5 + 0.5 * level, 100.0, mid - 0.5 - 0.5 * level, 100.0]
    book = np.tile(np.array(row), (events, 1))
    write_canonical_csv(LobEventSeries(np.arange(events, dtype=np.float64), book), str(path))


def test_params_reports_default_count(capsys):
    code, body = run(capsys, "params")
    assert code == 0
    assert body["data"]["parameters"] == 20527
    assert body["data"]["reference_parameters"] == REFERENCE_PARAMETER_COUNT == 9615
    assert 5000 <= body["data"]["parameters"] <= 50000


def test_params_with_override(capsys):
    _, body = run(capsys, "params", "--set", "model.block_channels=8")
    assert body["data"]["parameters"] == 9327


@pytest.mark.parametrize("argv", [
    ["params", "--bogus"],
    ["frobnicate"],
    ["params", "--set", "model.heads=3"],
    ["params", "--set", "model.nonexistent=1"],
    ["permtest", "--checkpoint", "missing.axlob", "--trials", "-1"],
])
def test_config_errors_exit_2(capsys, argv):
    code, body = run(capsys, *argv)
    assert code == 2
    assert body["error_code"] == 2
    assert "\n" not in body["error_message"]


def test_missing_input_file_exits_3(capsys, tmp_path):
    code, body = run(capsys, "label", "--in", str(tmp_path / "missing.csv"), "--k", "10",
                     "--out", str(tmp_path / "labels.csv"))
    assert code == 3
    assert body["error_message"].startswith("DataError")


def test_crossed_book_exits_3(capsys, tmp_path):
    path = tmp_path / "crossed.csv"
    constant_book_csv(path, events=10)
    lines = path.read_text().splitlines()
    cells = lines[8].split(",")
    cells[3] = "500.0"
    lines[8] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    code, body = run(capsys, "label", "--in", str(path), "--k", "1", "--out", str(tmp_path / "labels.csv"))
    assert code == 3
    assert "BookValidationError" in body["error_message"]


def test_constant_series_is_fully_stationary(capsys, tmp_path):
    data = tmp_path / "flat.csv"
    constant_book_csv(data)
    out = tmp_path / "labels.csv"
    code, body = run(capsys, "label", "--in", str(data), "--k", "10", "--horizons", "10,20", "--out", str(out))
    assert code == 0
    distribution = body["data"]["class_distribution"]
    assert distribution["10"]["stationary_share"] == 1.0
    assert distribution["20"]["stationary_share"] == 1.0
    labels = pd.read_csv(out)
    assert len(labels) == 200 - 39 - 10
    assert (labels["label"] == 0).all()
    assert (tmp_path / "labels.csv.conf").is_file()
    assert (tmp_path / "labels.csv.distribution.csv").is_file()


def test_synth_label_train_eval_pipeline(capsys, tmp_path):
    data = tmp_path / "synth.csv"
    code, body = run(capsys, "synth", "--out", str(data), "--events", "1200", "--seed", "0")
    assert code == 0
    assert body["data"]["planted_accuracy"] >= 0.95
    assert "synth.events = 1200" in (tmp_path / "synth.csv.conf").read_text()

    code, body = run(capsys, "label", "--in", str(data), "--k", "10", "--out", str(tmp_path / "labels.csv"))
    assert code == 0
    assert body["data"]["windows"] == 1200 - 39 - 10

    run_dir = tmp_path / "run"
    code, body = run(capsys, "train", "--out", str(run_dir), "--set", f"data.path={data}", *TINY_SETS)
    assert code == 0
    assert body["data"]["epochs"] == 2
    trained_f1 = body["data"]["test_macro_f1"]
    for name in ("run_config.conf", "initial.axlob", "best.axlob", "metrics.jsonl", "test_metrics.json"):
        assert (run_dir / name).is_file()

    code, body = run(capsys, "eval", "--checkpoint", str(run_dir / "best.axlob"))
    assert code == 0
    assert body["data"]["split"] == "test"
    assert body["data"]["total"] == 360 - 39 - 10
    assert body["data"]["macro_f1"] == pytest.approx(trained_f1)
    report = json.loads((run_dir / "eval_test.json").read_text())
    assert report["metadata"]["checkpoint"] == "best.axlob"
    assert (run_dir / "eval_test.json.conf").is_file()

    code, body = run(capsys, "permtest", "--checkpoint", str(run_dir / "initial.axlob"), "--trials", "2")
    assert code == 0
    perm = pd.read_csv(run_dir / "permtest.csv")
    assert body["data"]["trials"] == 2
    assert len(perm) == 2 + 1
    assert perm["delta"].iloc[0] == 0.0
    assert perm["permutation_seed"].tolist()[1:] == [0, 1]


def run_failing(capsys, *argv):
    code = main(list(argv))
    err = capsys.readouterr().err
    assert "Traceback" not in err
    envelopes = [line for line in err.splitlines() if line.startswith("{")]
    assert len(envelopes) == 1
    return code, json.loads(envelopes[0])


def test_non_utf8_csv_exits_3(capsys, tmp_path):
    path = tmp_path / "latin1.csv"
    path.write_bytes(b"\xff\xfetimestamp,pa_1\n1,2\n")
    code, body = run_failing(capsys, "label", "--in", str(path), "--k", "10", "--out", str(tmp_path / "labels.csv"))
    assert code == 3
    assert body["error_message"].startswith("DataError")
    assert "UTF-8" in body["error_message"]


@pytest.mark.parametrize("payload", [
    struct.pack("<II", FORMAT_VERSION, 2) + b"\xff\xfe",
    struct.pack("<II", FORMAT_VERSION, 0) + struct.pack("<IBH", 1, 0, 2) + b"\xff\xfe",
])
def test_undecodable_checkpoint_exits_3(capsys, tmp_path, payload):
    path = tmp_path / "broken.axlob"
    path.write_bytes(MAGIC + payload)
    code, body = run_failing(capsys, "eval", "--checkpoint", str(path))
    assert code == 3
    assert body["error_message"].startswith("CheckpointFormatError")


def test_unwritable_output_exits_3(capsys, tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory\n")
    code, body = run_failing(capsys, "synth", "--out", str(blocker / "synth.csv"), "--events", "200")
    assert code == 3
    assert body["error_message"].startswith("FileAccessError")
