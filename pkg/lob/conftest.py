import numpy as np
import pytest

from lob.book import ASK_PRICE, ASK_VOLUME, BID_PRICE, BID_VOLUME, FEATURES_PER_LEVEL, LEVELS, LobEventSeries

HALF_SPREAD = 0.5
TICK = 0.5


def series_from_mids(mids, days=None, volume: float = 100.0) -> LobEventSeries:
    """由中间价序列构造合法的10档订单簿（卖一 = 中间价 + 0.5，买一 = 中间价 − 0.5）"""
    mids = np.asarray(mids, dtype=np.float64)
    depth = np.arange(LEVELS)
    grid = np.empty((len(mids), LEVELS, FEATURES_PER_LEVEL))
    grid[:, :, ASK_PRICE] = mids[:, None] + HALF_SPREAD + TICK * depth
    grid[:, :, BID_PRICE] = mids[:, None] - HALF_SPREAD - TICK * depth
    grid[:, :, ASK_VOLUME] = volume
    grid[:, :, BID_VOLUME] = volume
    return LobEventSeries(np.arange(len(mids), dtype=np.float64), grid.reshape(len(mids), -1), days)


@pytest.fixture
def make_series():
    return series_from_mids


@pytest.fixture
def random_walk_series():
    rng = np.random.default_rng(0)
    mids = 1000 * np.cumprod(1 + rng.normal(0, 0.002, size=300))
    return series_from_mids(mids)
