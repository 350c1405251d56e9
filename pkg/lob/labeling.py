"""
中间价方向标注

    m_k(t) = (1/k) Σ_{i=1..k} p(t+i)          未来 k 个中间价的均值
    d      = (m_k(t) − p(t)) / p(t)
    up: d > α，down: d < −α，否则 stationary（边界 d = ±α 视为平稳）
"""
import logging
import math
from enum import Enum
from typing import Dict, Iterable, Sequence

import numpy as np
import pandas as pd

from axial.errors import ConfigError, HorizonBoundaryError

from .book import LobEventSeries

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.002
DEFAULT_HORIZONS = (10, 20, 30, 50, 100)


class Direction(Enum):
    """
    价格方向，值为导出CSV中的标签

    - DOWN: -1
    - STATIONARY: 0
    - UP: 1
    """
    DOWN = -1
    STATIONARY = 0
    UP = 1

    @property
    def class_index(self) -> int:
        """模型输出的类别下标：down=0, stationary=1, up=2"""
        return self.value + 1

    @classmethod
    def from_class_index(cls, index: int) -> "Direction":
        return cls(int(index) - 1)


def _check_horizon(length: int, t: int, k: int) -> None:
    if k < 1:
        raise ConfigError(f"预测步长 k 必须大于0，当前为 {k}")
    if t < 0 or t + k >= length:
        raise HorizonBoundaryError(f"事件 {t} 之后不足 {k} 个事件（序列长度 {length}）")


def smoothed_future_mid(series: LobEventSeries, t: int, k: int) -> float:
    """
    未来 k 个中间价 p(t+1)..p(t+k) 的均值

    Raises:
        HorizonBoundaryError: t + k 超出序列
    """
    mids = series.mid_prices()
    _check_horizon(len(mids), t, k)
    return _future_mean(mids, t, k)


def _future_mean(mids: np.ndarray, t: int, k: int) -> float:
    return math.fsum(mids[t + 1:t + k + 1].tolist()) / k


def classify_change(current: float, future_mean: float, alpha: float = DEFAULT_ALPHA) -> Direction:
    d = (future_mean - current) / current
    if d > alpha:
        return Direction.UP
    if d < -alpha:
        return Direction.DOWN
    return Direction.STATIONARY


def direction_label(series: LobEventSeries, t: int, k: int, alpha: float = DEFAULT_ALPHA) -> Direction:
    """事件 t 在步长 k 下的方向标签"""
    return classify_change(float(series.mid_prices()[t]), smoothed_future_mid(series, t, k), alpha)


def label_anchors(mids: np.ndarray, anchors: Iterable[int], k: int, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """
    批量标注，返回类别下标数组（与 direction_label 逐点一致）

    Raises:
        HorizonBoundaryError: 任一锚点超出序列
    """
    labels = []
    for t in anchors:
        _check_horizon(len(mids), int(t), k)
        labels.append(classify_change(float(mids[t]), _future_mean(mids, int(t), k), alpha).class_index)
    return np.asarray(labels, dtype=np.int64)


def label_series(series: LobEventSeries, k: int, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """为所有有足够未来事件的位置 t = 0..T-1-k 打标签"""
    mids = series.mid_prices()
    return label_anchors(mids, range(max(len(mids) - k, 0)), k, alpha)


def class_distribution(
    series: LobEventSeries,
    horizons: Sequence[int] = DEFAULT_HORIZONS,
    alpha: float = DEFAULT_ALPHA,
    history: int = 40,
) -> pd.DataFrame:
    """
    各预测步长下三类标签的数量与占比（只统计可构成完整窗口的锚点）

    Returns:
        以 k 为索引的 DataFrame，列为 down/stationary/up/total 及对应的 *_share
    """
    from .windows import admissible_anchors

    mids = series.mid_prices()
    rows: Dict[int, Dict[str, float]] = {}
    for k in horizons:
        anchors = admissible_anchors(len(mids), k, history)
        labels = label_anchors(mids, anchors, k, alpha)
        counts = np.bincount(labels, minlength=3)
        total = int(counts.sum())
        row = {d.name.lower(): int(counts[d.class_index]) for d in Direction}
        row["total"] = total
        for d in Direction:
            name = d.name.lower()
            row[f"{name}_share"] = row[name] / total if total else 0.0
        rows[k] = row
    frame = pd.DataFrame.from_dict(rows, orient="index")
    frame.index.name = "k"
    return frame
