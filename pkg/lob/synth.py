"""
带植入信号的合成订单簿数据

中间价按"状态随机游走"生成：状态 s ∈ {-1, 0, 1}，持续时间服从几何分布，
每步收益为 s·drift + volatility·ε。drift 取 margin·α·2/(k+1)，使趋势段的
平滑未来变化约为 margin·α。标签按正式标注规则算出后，再把一、二档的
买卖量失衡设为 signal·label + noise·ε，于是当前快照的失衡决定未来方向。
"""
import logging
from dataclasses import dataclass

import numpy as np

from axial.errors import ConfigError

from .book import ASK_PRICE, ASK_VOLUME, BID_PRICE, BID_VOLUME, FEATURES_PER_LEVEL, LEVELS, LobEventSeries
from .labeling import DEFAULT_ALPHA, label_series

logger = logging.getLogger(__name__)

# 失衡截断，保证一、二档成交量为正
IMBALANCE_LIMIT = 0.9
RELATIVE_HALF_SPREAD = 1e-4
RELATIVE_LEVEL_GAP = 1e-4


@dataclass
class SynthConfig:
    """
    合成数据配置

    属性:
        events (int): 事件数
        horizon (int): 植入信号所对齐的预测步长 k
        alpha (float): 标注阈值
        signal (float): 信号强度，0 为无信号，1 为完全由标签决定失衡
        noise (float): 失衡上叠加的高斯噪声标准差
        volatility (float): 每步收益的噪声标准差
        margin (float): 趋势段平滑变化相对 α 的倍数
        regime_length (float): 状态平均持续事件数
        start_price (float): 初始中间价
        base_volume (float): 基准挂单量
        days (int): 大于0时把事件平均分配到这么多个交易日
    """
    events: int = 5000
    horizon: int = 10
    alpha: float = DEFAULT_ALPHA
    signal: float = 1.0
    noise: float = 0.1
    volatility: float = 1e-4
    margin: float = 2.0
    regime_length: float = 50.0
    start_price: float = 100.0
    base_volume: float = 100.0
    days: int = 0

    def __post_init__(self):
        if self.events <= 0:
            raise ConfigError("事件数必须大于0")
        if self.horizon <= 0:
            raise ConfigError("预测步长必须大于0")
        if self.alpha <= 0:
            raise ConfigError("标注阈值必须大于0")
        if not 0.0 <= self.signal <= 1.0:
            raise ConfigError("信号强度必须在 [0, 1] 内")
        if self.noise < 0 or self.volatility < 0:
            raise ConfigError("噪声标准差不能为负数")
        if self.regime_length < 1:
            raise ConfigError("状态平均持续时间至少为1")
        if self.start_price <= 0 or self.base_volume <= 0:
            raise ConfigError("初始价格和基准挂单量必须大于0")
        if self.days < 0:
            raise ConfigError("交易日数不能为负数")

    @property
    def drift(self) -> float:
        return self.margin * self.alpha * 2 / (self.horizon + 1)


def _regimes(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    states = np.empty(cfg.events, dtype=np.int64)
    filled = 0
    while filled < cfg.events:
        length = int(rng.geometric(1.0 / cfg.regime_length))
        states[filled:filled + length] = rng.integers(-1, 2)
        filled += length
    return states


def book_imbalance(book: np.ndarray) -> np.ndarray:
    """一、二档买卖量失衡 (V_bid − V_ask) / (V_bid + V_ask)"""
    grid = book.reshape(book.shape[0], LEVELS, FEATURES_PER_LEVEL)[:, :2]
    bid = grid[:, :, BID_VOLUME].sum(axis=1)
    ask = grid[:, :, ASK_VOLUME].sum(axis=1)
    return (bid - ask) / (bid + ask)


def planted_rule(imbalance: np.ndarray, signal: float) -> np.ndarray:
    """植入规则的决策：失衡超过 ±signal/2 判为涨/跌，否则平稳；返回类别下标"""
    threshold = signal / 2
    return np.where(imbalance > threshold, 2, np.where(imbalance < -threshold, 0, 1))


def synth_generate(cfg: SynthConfig, seed: int = 0) -> LobEventSeries:
    """
    生成合成事件序列

    订单簿始终不交叉、各档价格单调；series.metadata["planted_accuracy"] 为植入规则
    在所有可标注事件上的准确率（有噪声时即该信号可达到的准确率）。
    """
    rng = np.random.default_rng(seed)
    states = _regimes(rng, cfg)
    returns = states * cfg.drift + cfg.volatility * rng.standard_normal(cfg.events)
    returns[0] = 0.0
    mids = cfg.start_price * np.cumprod(1.0 + returns)

    book = np.empty((cfg.events, LEVELS, FEATURES_PER_LEVEL))
    depth = np.arange(LEVELS)
    half_spread = mids * RELATIVE_HALF_SPREAD
    gap = mids * RELATIVE_LEVEL_GAP
    book[:, :, ASK_PRICE] = (mids + half_spread)[:, None] + gap[:, None] * depth[None, :]
    book[:, :, BID_PRICE] = (mids - half_spread)[:, None] - gap[:, None] * depth[None, :]
    book[:, :, ASK_VOLUME] = cfg.base_volume * rng.uniform(0.5, 1.5, size=(cfg.events, LEVELS))
    book[:, :, BID_VOLUME] = cfg.base_volume * rng.uniform(0.5, 1.5, size=(cfg.events, LEVELS))
    book = book.reshape(cfg.events, -1)

    series = LobEventSeries(np.arange(cfg.events, dtype=np.float64), book)
    labels = label_series(series, cfg.horizon, cfg.alpha)
    direction = states.astype(np.float64)
    direction[:len(labels)] = labels - 1
    imbalance = np.clip(cfg.signal * direction + cfg.noise * rng.standard_normal(cfg.events),
                        -IMBALANCE_LIMIT, IMBALANCE_LIMIT)

    grid = series.book.reshape(cfg.events, LEVELS, FEATURES_PER_LEVEL)
    for level in (0, 1):
        grid[:, level, BID_VOLUME] = cfg.base_volume * (1 + imbalance)
        grid[:, level, ASK_VOLUME] = cfg.base_volume * (1 - imbalance)

    if cfg.days:
        series.days = 1 + np.arange(cfg.events, dtype=np.int64) * cfg.days // cfg.events

    if len(labels):
        predicted = planted_rule(book_imbalance(series.book)[:len(labels)], cfg.signal)
        accuracy = float(np.mean(predicted == labels))
        shares = (np.bincount(labels, minlength=3) / len(labels)).round(4).tolist()
    else:
        accuracy, shares = float("nan"), [0.0, 0.0, 0.0]
    series.metadata.update({
        "planted_accuracy": accuracy,
        "class_shares": shares,
        "horizon": cfg.horizon,
        "alpha": cfg.alpha,
        "signal": cfg.signal,
        "noise": cfg.noise,
        "seed": seed,
    })
    logger.info("合成数据: %d 个事件，植入规则准确率 %.4f，类别占比 %s", cfg.events, accuracy, shares)
    return series
