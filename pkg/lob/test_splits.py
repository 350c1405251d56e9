import numpy as np
import pytest

from axial.errors import ConfigError, DataError
from lob.splits import split, split_windows


def test_event_split_without_days(make_series):
    parts = split(make_series(np.full(1000, 100.0)))
    assert (len(parts.train), len(parts.validation), len(parts.test)) == (560, 140, 300)
    assert parts.train.stop == parts.validation.start
    assert parts.validation.stop == parts.test.start == 700


def test_day_split_uses_first_seven_days(make_series):
    days = np.repeat(np.arange(1, 11), 100)
    parts = split(make_series(np.full(1000, 100.0), days=days))
    assert parts.test.start == 700
    assert parts.day_boundaries[:3] == [0, 100, 200]
    assert len(parts.validation) == 140


def test_uneven_days(make_series):
    days = np.concatenate([np.full(50, d) for d in range(1, 8)] + [np.full(30, d) for d in range(8, 11)])
    parts = split(make_series(np.full(len(days), 100.0), days=days))
    assert parts.test.start == 350
    assert len(parts.validation) == 70


def test_too_few_days(make_series):
    with pytest.raises(ConfigError):
        split(make_series(np.full(90, 100.0), days=np.repeat(np.arange(9), 10)))


def test_days_must_not_decrease(make_series):
    days = np.repeat(np.arange(10), 10)
    days[50] = 0
    with pytest.raises(DataError):
        split(make_series(np.full(100, 100.0), days=days))


def test_windows_never_straddle_segments(random_walk_series):
    parts = split(random_walk_series)
    for segment, windows in zip(parts.segments(), split_windows(random_walk_series, parts, k=5)):
        if not len(windows):
            continue
        first, last = windows.event_range()
        assert segment.start <= first and last < segment.stop


def test_window_offsets_point_into_original_series(random_walk_series):
    parts = split(random_walk_series)
    _, _, test = split_windows(random_walk_series, parts, k=5)
    window = next(iter(test))
    np.testing.assert_array_equal(window.matrix[-1], random_walk_series.book[window.anchor])
