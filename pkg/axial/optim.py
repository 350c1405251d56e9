"""
优化器与学习率调度

- cosine_lr_multiplier: 单次余弦衰减 ½(1 + cos(π·T_cur/T_total))
- SGDMomentum: 带动量的小批量随机梯度下降，trainable=False 的参数不更新
"""
import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, TapeError
from .tensor import Parameter

logger = logging.getLogger(__name__)


def cosine_lr_multiplier(t_cur: int, t_total: int) -> float:
    """
    余弦退火系数，取值 [0, 1]

    T_cur 超过 T_total 时截断为 0 并记录警告。

    Raises:
        ConfigError: T_total <= 0 或 T_cur < 0
    """
    if t_total <= 0:
        raise ConfigError(f"T_total 必须大于0，当前为 {t_total}")
    if t_cur < 0:
        raise ConfigError(f"T_cur 不能为负数，当前为 {t_cur}")
    if t_cur > t_total:
        logger.warning("T_cur=%d 超过 T_total=%d，学习率系数截断为0", t_cur, t_total)
        return 0.0
    return 0.5 * (1.0 + math.cos(math.pi * t_cur / t_total))


class SGDMomentum:
    """
    动量SGD

    更新规则:
        buffer ← μ·buffer + grad
        param  ← param − lr·buffer

    动量缓冲区按参数在 params 中的位置保存，形状与参数一致。
    冻结参数（trainable=False）既不更新数值也不更新缓冲区。
    """

    def __init__(self, params: Sequence[Parameter], momentum: float = 0.9):
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"动量系数必须在 [0, 1) 内，当前为 {momentum}")
        self.params: List[Parameter] = list(params)
        self.momentum = momentum
        self.buffers: List[np.ndarray] = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float) -> None:
        sgd_momentum_step(self.params, self.buffers, self.momentum, lr)

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {p.name or str(i): buf.copy() for i, (p, buf) in enumerate(zip(self.params, self.buffers))}


def sgd_momentum_step(
    params: Sequence[Parameter],
    buffers: List[np.ndarray],
    momentum: float,
    lr: float,
    grads: Optional[Sequence[np.ndarray]] = None,
) -> None:
    """
    对一组参数执行一步动量更新（原地修改参数与缓冲区）

    Args:
        params: 参数列表
        buffers: 与 params 一一对应的动量缓冲区
        momentum: μ
        lr: 本步学习率
        grads: 显式梯度，默认取各参数的 grad

    Raises:
        TapeError: 可训练参数缺少梯度
    """
    if grads is None:
        grads = [p.grad for p in params]
    for i, (param, grad) in enumerate(zip(params, grads)):
        if not param.trainable:
            continue
        if grad is None:
            raise TapeError(f"参数 {param.name or i} 没有梯度，请先调用 backward")
        buffers[i] *= momentum
        buffers[i] += grad
        param.data -= (lr * buffers[i]).astype(param.dtype)
