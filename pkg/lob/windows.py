"""
输入窗口构造、归一化与特征置换

窗口 = 以锚点 t 结尾的最近 40 个快照（最早的在前）× 40 个特征。
需要序列起点之前或终点之后数据的窗口直接丢弃，不做填充。
"""
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterator, Sequence

import numpy as np

from axial.errors import DataError

from .book import FEATURE_COUNT, LobEventSeries
from .labeling import DEFAULT_ALPHA, Direction, label_anchors

logger = logging.getLogger(__name__)

HISTORY = 40
STD_FLOOR = 1e-8


def admissible_anchors(length: int, k: int, history: int = HISTORY) -> np.ndarray:
    """可用锚点 t = history-1 .. length-1-k"""
    return np.arange(history - 1, max(length - k, history - 1), dtype=np.int64)


@dataclass
class LabeledWindow:
    """
    单个带标签窗口

    属性:
        matrix: (history, 40)，行为时间（最早在前），列为特征
        label: 方向标签
        horizon: 预测步长 k
        anchor: 锚点事件下标 t
    """
    matrix: np.ndarray
    label: Direction
    horizon: int
    anchor: int


@dataclass
class WindowSet:
    """
    窗口集合（窗口流）

    共享一段序列的特征矩阵，只保存锚点与标签；按锚点顺序迭代，按需拼成批。

    属性:
        features: (T, 40) 该段序列的（可能已归一化/置换的）特征
        anchors: (n,) 锚点在该段内的下标，递增
        labels: (n,) 类别下标（down=0, stationary=1, up=2）
        horizon: 预测步长 k
        history: 窗口长度
        offset: 该段第一个事件在原始序列中的下标
    """
    features: np.ndarray
    anchors: np.ndarray
    labels: np.ndarray
    horizon: int
    history: int = HISTORY
    offset: int = 0

    def __len__(self) -> int:
        return len(self.anchors)

    def window(self, i: int) -> np.ndarray:
        t = int(self.anchors[i])
        return self.features[t - self.history + 1:t + 1]

    def __iter__(self) -> Iterator[LabeledWindow]:
        for i in range(len(self)):
            yield LabeledWindow(
                matrix=self.window(i),
                label=Direction.from_class_index(self.labels[i]),
                horizon=self.horizon,
                anchor=int(self.anchors[i]) + self.offset,
            )

    def batch(self, indices: Sequence[int], dtype=np.float32) -> np.ndarray:
        """取若干窗口，返回 (len, 1, history, 40) 的输入批"""
        rows = self.anchors[np.asarray(indices, dtype=np.int64)]
        steps = np.arange(-self.history + 1, 1)
        return self.features[rows[:, None] + steps[None, :]][:, None, :, :].astype(dtype)

    def subset(self, indices: Sequence[int]) -> "WindowSet":
        indices = np.asarray(indices, dtype=np.int64)
        return replace(self, anchors=self.anchors[indices], labels=self.labels[indices])

    def with_features(self, features: np.ndarray) -> "WindowSet":
        return replace(self, features=features)

    def event_range(self) -> tuple:
        """窗口输入行与标签步长覆盖的原始事件区间 [first, last]"""
        if not len(self):
            return (self.offset, self.offset - 1)
        first = int(self.anchors[0]) - self.history + 1 + self.offset
        last = int(self.anchors[-1]) + self.horizon + self.offset
        return (first, last)


def build_windows(
    series: LobEventSeries,
    k: int,
    alpha: float = DEFAULT_ALPHA,
    history: int = HISTORY,
    offset: int = 0,
) -> WindowSet:
    """
    为每个可用锚点构造一个带标签窗口

    序列长度 < history + k 时返回空集合并记录警告。
    """
    anchors = admissible_anchors(len(series), k, history)
    if len(anchors) == 0:
        logger.warning("序列长度 %d 不足 %d + %d，没有可用窗口", len(series), history, k)
    labels = label_anchors(series.mid_prices(), anchors, k, alpha)
    return WindowSet(series.book.copy(), anchors, labels, k, history, offset)


class NormalizationMode(Enum):
    """
    输入归一化方式

    - ZSCORE: 用训练段统计量做逐特征 z-score
    - NONE: 不归一化（消融用）
    """
    ZSCORE = "zscore"
    NONE = "none"


@dataclass
class NormalizationStats:
    """逐特征均值与标准差（标准差下限 1e-8）"""
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, windows: WindowSet, mode: NormalizationMode = NormalizationMode.ZSCORE) -> "NormalizationStats":
        """只用训练段的事件计算统计量"""
        if NormalizationMode(mode) is NormalizationMode.NONE:
            return cls.identity(windows.features.shape[1])
        if windows.features.shape[0] == 0:
            raise DataError("训练段为空，无法计算归一化统计量")
        mean = windows.features.mean(axis=0)
        std = np.maximum(windows.features.std(axis=0), STD_FLOOR)
        return cls(mean, std)

    @classmethod
    def identity(cls, features: int = FEATURE_COUNT) -> "NormalizationStats":
        return cls(np.zeros(features), np.ones(features))


def normalize(windows: WindowSet, stats: NormalizationStats) -> WindowSet:
    return windows.with_features((windows.features - stats.mean) / stats.std)


def denormalize(windows: WindowSet, stats: NormalizationStats) -> WindowSet:
    return windows.with_features(windows.features * stats.std + stats.mean)


def validate_permutation(permutation: Sequence[int], size: int = FEATURE_COUNT) -> np.ndarray:
    """
    Raises:
        DataError: 不是 0..size-1 上的双射
    """
    perm = np.asarray(permutation)
    if perm.shape != (size,) or not np.issubdtype(perm.dtype, np.integer):
        raise DataError(f"特征置换必须是长度为 {size} 的整数序列")
    if not np.array_equal(np.sort(perm), np.arange(size)):
        raise DataError("特征置换不是双射")
    return perm.astype(np.int64)


def permute_features(windows: WindowSet, permutation: Sequence[int]) -> WindowSet:
    """新第 j 列取原第 permutation[j] 列，对所有窗口一致，标签不变"""
    perm = validate_permutation(permutation, windows.features.shape[1])
    return windows.with_features(windows.features[:, perm])


def inverse_permutation(permutation: Sequence[int]) -> np.ndarray:
    return np.argsort(validate_permutation(permutation, len(permutation)))


def random_permutation(seed: int, size: int = FEATURE_COUNT) -> np.ndarray:
    return np.random.default_rng(seed).permutation(size)

