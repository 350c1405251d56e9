"""
按时间切分训练/验证/测试段

有交易日标注时：前7个交易日为训练，其后为测试；否则按事件数 70/30 切分。
验证集始终为训练段最后 20% 的事件。各段分别构造窗口，窗口不会跨段。
"""
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from axial.errors import ConfigError, DataError

from .book import LobEventSeries
from .labeling import DEFAULT_ALPHA
from .windows import HISTORY, WindowSet, build_windows

logger = logging.getLogger(__name__)

TRAIN_DAYS = 7
TEST_DAYS = 3
TRAIN_FRACTION = 0.7
VALIDATION_FRACTION = 0.2


@dataclass
class DatasetSplit:
    """
    事件下标区间 [start, stop)

    属性:
        train, validation, test: 三段区间，依时间先后排列
        day_boundaries: 每个交易日第一个事件的下标
    """
    train: range
    validation: range
    test: range
    day_boundaries: List[int] = field(default_factory=list)

    def segments(self) -> Tuple[range, range, range]:
        return self.train, self.validation, self.test


def split(
    series: LobEventSeries,
    train_days: int = TRAIN_DAYS,
    test_days: int = TEST_DAYS,
    train_fraction: float = TRAIN_FRACTION,
    validation_fraction: float = VALIDATION_FRACTION,
) -> DatasetSplit:
    """
    Raises:
        ConfigError: 有交易日标注但天数不足
        DataError: 交易日标注不是按时间非递减
    """
    total = len(series)
    if series.days is not None and len(series.days):
        days = series.days
        if np.any(np.diff(days) < 0):
            raise DataError("交易日标注必须按时间非递减")
        boundaries = [0] + (np.flatnonzero(np.diff(days)) + 1).tolist()
        if len(boundaries) < train_days + test_days:
            raise ConfigError(
                f"按交易日切分需要至少 {train_days + test_days} 个交易日，当前只有 {len(boundaries)} 个")
        train_end = boundaries[train_days]
    else:
        boundaries = []
        train_end = int(round(total * train_fraction))
        logger.info("序列没有交易日标注，按事件数 %.0f/%.0f 切分", train_fraction * 100, (1 - train_fraction) * 100)

    validation_size = int(round(train_end * validation_fraction))
    fit_end = train_end - validation_size
    result = DatasetSplit(range(0, fit_end), range(fit_end, train_end), range(train_end, total), boundaries)
    logger.info("数据切分: 训练 %d / 验证 %d / 测试 %d 个事件", len(result.train), len(result.validation), len(result.test))
    return result


def split_windows(
    series: LobEventSeries,
    dataset_split: DatasetSplit,
    k: int,
    alpha: float = DEFAULT_ALPHA,
    history: int = HISTORY,
) -> Tuple[WindowSet, WindowSet, WindowSet]:
    """在每一段内部独立构造窗口，返回 (train, validation, test)"""
    sets = []
    for segment in dataset_split.segments():
        part = series.subset(np.arange(segment.start, segment.stop))
        sets.append(build_windows(part, k, alpha, history, offset=segment.start))
    return sets[0], sets[1], sets[2]
