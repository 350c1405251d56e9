"""
中心差分梯度检查

在 float64 下比较解析梯度与 (f(x+h) - f(x-h)) / 2h，
相对误差定义为 |a - n| / max(|a|, |n|, floor)。
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-4
DEFAULT_TOLERANCE = 1e-4


@dataclass
class GradCheckResult:
    """梯度检查结果"""
    checked: int
    max_relative_error: float
    worst_tensor: int
    worst_index: int

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= DEFAULT_TOLERANCE


def gradcheck(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    samples: int = 100,
    step: float = DEFAULT_STEP,
    seed: int = 0,
    floor: float = 1e-3,
    zero_grad: Optional[Callable[[], None]] = None,
) -> GradCheckResult:
    """
    对 fn() 产生的标量关于 inputs 的梯度做随机坐标检查

    Args:
        fn: 无参函数，每次调用重新执行前向并返回标量张量
        inputs: 需要检查的叶子张量（requires_grad=True，应为 float64）
        samples: 随机抽取的坐标总数；坐标不足时全部检查
        step: 差分步长
        seed: 抽样种子
        floor: 相对误差分母下限，避免梯度接近0时放大误差
        zero_grad: 可选的清零回调，默认把 inputs 的 grad 置零

    Returns:
        GradCheckResult
    """
    for t in inputs:
        t.zero_grad()
    if zero_grad is not None:
        zero_grad()
    loss = fn()
    backward(loss)
    analytic = [t.grad.copy() for t in inputs]

    coordinates = [(ti, j) for ti, t in enumerate(inputs) for j in range(t.size)]
    rng = np.random.default_rng(seed)
    if len(coordinates) > samples:
        picked = rng.choice(len(coordinates), size=samples, replace=False)
        coordinates = [coordinates[i] for i in sorted(picked)]

    worst = (0.0, -1, -1)
    errors: List[float] = []
    for ti, j in coordinates:
        flat = inputs[ti].data.reshape(-1)
        original = flat[j]
        with no_grad():
            flat[j] = original + step
            plus = float(fn().data)
            flat[j] = original - step
            minus = float(fn().data)
        flat[j] = original
        numeric = (plus - minus) / (2 * step)
        value = float(analytic[ti].reshape(-1)[j])
        error = abs(value - numeric) / max(abs(value), abs(numeric), floor)
        errors.append(error)
        if error > worst[0]:
            worst = (error, ti, j)

    logger.debug("gradcheck: %d coordinates, max relative error %.3e", len(errors), worst[0])
    return GradCheckResult(checked=len(errors), max_relative_error=worst[0], worst_tensor=worst[1], worst_index=worst[2])
