"""
限价订单簿（LOB）数据结构

特征顺序固定为 [p_a^(i), v_a^(i), p_b^(i), v_b^(i)]，i = 1..10，共40列。
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from axial.errors import BookValidationError

LEVELS = 10
FEATURES_PER_LEVEL = 4
FEATURE_COUNT = LEVELS * FEATURES_PER_LEVEL

# 特征列在一档内的偏移
ASK_PRICE, ASK_VOLUME, BID_PRICE, BID_VOLUME = range(FEATURES_PER_LEVEL)


def feature_names() -> List[str]:
    """规范CSV的特征列名：pa1,va1,pb1,vb1,...,pa10,va10,pb10,vb10"""
    return [f"{prefix}{level}" for level in range(1, LEVELS + 1) for prefix in ("pa", "va", "pb", "vb")]


def column(level: int, offset: int) -> int:
    """第 level 档（从1开始）某个字段在40列中的位置"""
    return (level - 1) * FEATURES_PER_LEVEL + offset


@dataclass
class LobSnapshot:
    """
    单个订单簿快照

    属性:
        timestamp: 事件序号（tick time）
        ask_prices, ask_volumes, bid_prices, bid_volumes: 长度10，按档位从优到劣
    """
    timestamp: float
    ask_prices: np.ndarray
    ask_volumes: np.ndarray
    bid_prices: np.ndarray
    bid_volumes: np.ndarray

    @classmethod
    def from_row(cls, timestamp: float, row: np.ndarray) -> "LobSnapshot":
        grid = np.asarray(row, dtype=np.float64).reshape(LEVELS, FEATURES_PER_LEVEL)
        return cls(timestamp, grid[:, ASK_PRICE], grid[:, ASK_VOLUME], grid[:, BID_PRICE], grid[:, BID_VOLUME])

    def to_row(self) -> np.ndarray:
        return np.stack([self.ask_prices, self.ask_volumes, self.bid_prices, self.bid_volumes], axis=1).reshape(-1)


def mid_price(snapshot: LobSnapshot) -> float:
    """
    中间价 (p_a^1 + p_b^1) / 2

    Raises:
        BookValidationError: 买卖价交叉
    """
    ask, bid = float(snapshot.ask_prices[0]), float(snapshot.bid_prices[0])
    if bid > ask:
        raise BookValidationError(f"订单簿买卖价交叉: 买一 {bid} > 卖一 {ask}")
    return (ask + bid) / 2


def validate_book(book: np.ndarray, index_offset: int = 0) -> None:
    """
    检查整段订单簿：价格为正、成交量非负、买卖不交叉、各档价格单调

    Raises:
        BookValidationError: 错误信息与 event_index 指向第一个不合法事件
    """
    grid = book.reshape(book.shape[0], LEVELS, FEATURES_PER_LEVEL)
    asks, bids = grid[:, :, ASK_PRICE], grid[:, :, BID_PRICE]
    volumes = grid[:, :, [ASK_VOLUME, BID_VOLUME]].reshape(book.shape[0], -1)
    checks = [
        (~np.isfinite(book).all(axis=1), "包含非有限数值"),
        (((asks <= 0) | (bids <= 0)).any(axis=1), "价格必须为正"),
        ((volumes < 0).any(axis=1), "成交量不能为负"),
        (bids[:, 0] > asks[:, 0], "买一价高于卖一价（订单簿交叉）"),
        ((np.diff(asks, axis=1) < 0).any(axis=1), "卖方价格随档位递减"),
        ((np.diff(bids, axis=1) > 0).any(axis=1), "买方价格随档位递增"),
    ]
    first = None
    for mask, message in checks:
        bad = np.flatnonzero(mask)
        if bad.size and (first is None or bad[0] < first[0]):
            first = (int(bad[0]), message)
    if first is not None:
        event = first[0] + index_offset
        raise BookValidationError(f"事件 {event}: {first[1]}", event_index=event)


@dataclass
class LobEventSeries:
    """
    按时间排序的订单簿事件序列

    属性:
        timestamps: (T,) 事件时间戳
        book: (T, 40) 特征矩阵，列顺序见 feature_names()
        days: (T,) 可选的交易日编号
        metadata: 生成器或导入过程附带的说明（如 planted_accuracy）
    """
    timestamps: np.ndarray
    book: np.ndarray
    days: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.book = np.asarray(self.book, dtype=np.float64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        if self.book.ndim != 2 or self.book.shape[1] != FEATURE_COUNT:
            raise BookValidationError(f"订单簿矩阵应为 (T, {FEATURE_COUNT})，当前为 {self.book.shape}")
        if self.timestamps.shape != (self.book.shape[0],):
            raise BookValidationError("时间戳数量与事件数量不一致")
        if self.days is not None:
            self.days = np.asarray(self.days, dtype=np.int64)
            if self.days.shape != self.timestamps.shape:
                raise BookValidationError("交易日标注数量与事件数量不一致")

    def __len__(self) -> int:
        return self.book.shape[0]

    def snapshot(self, t: int) -> LobSnapshot:
        return LobSnapshot.from_row(self.timestamps[t], self.book[t])

    def mid_prices(self) -> np.ndarray:
        """全部事件的中间价（向量化，要求订单簿已通过校验）"""
        return (self.book[:, column(1, ASK_PRICE)] + self.book[:, column(1, BID_PRICE)]) / 2

    def validate(self) -> "LobEventSeries":
        validate_book(self.book)
        return self

    def subset(self, mask: np.ndarray) -> "LobEventSeries":
        """按布尔掩码或索引取子序列"""
        days = None if self.days is None else self.days[mask]
        return LobEventSeries(self.timestamps[mask], self.book[mask], days, dict(self.metadata))
