import numpy as np
import pytest

from axial.errors import BookValidationError, DataError
from lob.book import column, feature_names
from lob.ingest import (
    IngestFormat, ingest, read_canonical_csv, read_fi2010_matrix, read_labels, write_canonical_csv, write_labels,
)
from lob.synth import SynthConfig, synth_generate
from lob.windows import build_windows


def test_canonical_csv_round_trip_is_exact(tmp_path):
    series = synth_generate(SynthConfig(events=200, days=2), seed=0)
    path = tmp_path / "book.csv"
    write_canonical_csv(series, str(path))
    loaded = read_canonical_csv(str(path))
    assert loaded.book.tobytes() == series.book.tobytes()
    np.testing.assert_array_equal(loaded.days, series.days)
    assert path.read_text().splitlines()[0] == ",".join(["ts"] + feature_names() + ["day"])


def test_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("ts,pa1\n0,1\n")
    with pytest.raises(DataError):
        read_canonical_csv(str(path))


def test_non_numeric_cell_reports_line(tmp_path, make_series):
    path = tmp_path / "book.csv"
    write_canonical_csv(make_series([100.0, 101.0, 102.0]), str(path))
    lines = path.read_text().splitlines()
    cells = lines[2].split(",")
    cells[5] = "abc"
    lines[2] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataError) as excinfo:
        read_canonical_csv(str(path))
    assert "第 3 行" in str(excinfo.value)


def test_crossed_row_reports_event_index(tmp_path, make_series):
    series = make_series([100.0, 101.0, 102.0, 103.0])
    series.book[2, column(1, 2)] = 500.0
    path = tmp_path / "book.csv"
    write_canonical_csv(series, str(path))
    with pytest.raises(BookValidationError) as excinfo:
        read_canonical_csv(str(path))
    assert excinfo.value.event_index == 2


def test_keep_ranges(tmp_path, make_series):
    path = tmp_path / "book.csv"
    write_canonical_csv(make_series(np.arange(100.0, 110.0)), str(path))
    series = read_canonical_csv(str(path), keep_ranges=[(0, 3), (7, 10)])
    np.testing.assert_array_equal(series.mid_prices(), [100, 101, 102, 107, 108, 109])


def test_fi2010_matrix(tmp_path, make_series):
    series = make_series(np.arange(100.0, 105.0))
    extra = np.random.default_rng(0).standard_normal((104, len(series)))
    matrix = np.vstack([series.book.T, extra])
    path = tmp_path / "Train_Dst.txt"
    np.savetxt(path, matrix)
    loaded = ingest(str(path), IngestFormat.FI2010_MATRIX)
    np.testing.assert_allclose(loaded.book, series.book)
    assert len(loaded) == 5


def test_fi2010_matrix_too_few_rows(tmp_path):
    path = tmp_path / "short.txt"
    np.savetxt(path, np.ones((10, 3)))
    with pytest.raises(DataError):
        read_fi2010_matrix(str(path))


def test_label_csv(tmp_path, random_walk_series):
    windows = build_windows(random_walk_series, k=10)
    path = tmp_path / "labels.csv"
    write_labels(windows, str(path))
    frame = read_labels(str(path))
    assert list(frame.columns) == ["anchor_t", "k", "label"]
    assert frame["anchor_t"].iloc[0] == 39
    assert set(frame["label"].unique()) <= {-1, 0, 1}
    np.testing.assert_array_equal(frame["label"].to_numpy() + 1, windows.labels)
