"""
可微原语

每个原语由一个 Function 子类（前向 + 梯度规则）和一个同名的函数式入口组成。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ShapeError, TargetIndexError
from .tensor import ArrayLike, Function, Tensor, as_tensor

Axis = Union[None, int, Tuple[int, ...]]

# 批归一化常量
BN_EPSILON = 1e-5
BN_MOMENTUM = 0.1


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """把广播后的梯度按求和规约回原始形状"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, length in enumerate(shape):
        if length == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _normalize_axes(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    normalized = []
    for a in axes:
        if not -ndim <= a < ndim:
            raise ShapeError(f"轴 {a} 超出张量维度 {ndim}")
        normalized.append(a % ndim)
    return tuple(sorted(normalized))


# *** 逐元素 ***

class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        try:
            return a + b
        except ValueError:
            raise ShapeError(f"无法相加的形状: {a.shape} 与 {b.shape}")

    def backward(self, grad):
        a, b = self.parents
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)


class Multiply(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        try:
            out = a * b
        except ValueError:
            raise ShapeError(f"无法逐元素相乘的形状: {a.shape} 与 {b.shape}")
        self.saved["a"], self.saved["b"] = a, b
        return out

    def backward(self, grad):
        a, b = self.saved["a"], self.saved["b"]
        return _unbroadcast(grad * b, a.shape), _unbroadcast(grad * a, b.shape)


class Scale(Function):
    def forward(self, x: np.ndarray, factor: float) -> np.ndarray:
        self.saved["factor"] = factor
        return x * x.dtype.type(factor)

    def backward(self, grad):
        return (grad * grad.dtype.type(self.saved["factor"]),)


class ReLU(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        mask = x > 0
        self.saved["mask"] = mask
        return np.where(mask, x, x.dtype.type(0))

    def backward(self, grad):
        # x == 0 处的次梯度取 0
        return (np.where(self.saved["mask"], grad, grad.dtype.type(0)),)


# *** 线性代数 ***

class MatMul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"矩阵乘法维度不匹配: {a.shape} @ {b.shape}")
        try:
            out = np.matmul(a, b)
        except ValueError:
            raise ShapeError(f"矩阵乘法批维度无法广播: {a.shape} @ {b.shape}")
        self.saved["a"], self.saved["b"] = a, b
        return out

    def backward(self, grad):
        a, b = self.saved["a"], self.saved["b"]
        grad_a = np.matmul(grad, np.swapaxes(b, -1, -2))
        grad_b = np.matmul(np.swapaxes(a, -1, -2), grad)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)


# *** 规约 ***

class Sum(Function):
    def forward(self, x: np.ndarray, axis: Axis = None, keepdims: bool = False) -> np.ndarray:
        axes = _normalize_axes(axis, x.ndim)
        self.saved["axes"], self.saved["shape"] = axes, x.shape
        return np.asarray(x.sum(axis=axes, keepdims=keepdims))

    def backward(self, grad):
        axes, shape = self.saved["axes"], self.saved["shape"]
        grad = np.expand_dims(grad, axes) if grad.ndim != len(shape) else grad
        return (np.broadcast_to(grad, shape).copy(),)


class Mean(Function):
    def forward(self, x: np.ndarray, axis: Axis = None, keepdims: bool = False) -> np.ndarray:
        axes = _normalize_axes(axis, x.ndim)
        count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
        self.saved["axes"], self.saved["shape"], self.saved["count"] = axes, x.shape, count
        return np.asarray(x.mean(axis=axes, keepdims=keepdims))

    def backward(self, grad):
        axes, shape, count = self.saved["axes"], self.saved["shape"], self.saved["count"]
        grad = np.expand_dims(grad, axes) if grad.ndim != len(shape) else grad
        return (np.broadcast_to(grad / grad.dtype.type(count), shape).copy(),)


# *** 结构变换 ***

class Reshape(Function):
    def forward(self, x: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        self.saved["shape"] = x.shape
        try:
            return x.reshape(shape)
        except ValueError:
            raise ShapeError(f"无法把形状 {x.shape} 变换为 {tuple(shape)}")

    def backward(self, grad):
        return (grad.reshape(self.saved["shape"]),)


class Transpose(Function):
    def forward(self, x: np.ndarray, axes: Optional[Tuple[int, ...]] = None) -> np.ndarray:
        if axes is None:
            if x.ndim < 2:
                raise ShapeError(f"转置至少需要二维张量，当前形状为 {x.shape}")
            axes = tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2)
        if sorted(a % x.ndim for a in axes) != list(range(x.ndim)) or len(axes) != x.ndim:
            raise ShapeError(f"轴排列 {axes} 与张量维度 {x.ndim} 不匹配")
        self.saved["axes"] = tuple(a % x.ndim for a in axes)
        return np.ascontiguousarray(np.transpose(x, axes))

    def backward(self, grad):
        return (np.ascontiguousarray(np.transpose(grad, np.argsort(self.saved["axes"]))),)


class Concatenate(Function):
    def forward(self, *arrays: np.ndarray, axis: int = 0) -> np.ndarray:
        try:
            out = np.concatenate(arrays, axis=axis)
        except ValueError as e:
            shapes = ", ".join(str(a.shape) for a in arrays)
            raise ShapeError(f"无法沿轴 {axis} 拼接形状 {shapes}: {e}")
        self.saved["sizes"] = [a.shape[axis] for a in arrays]
        self.saved["axis"] = axis
        return out

    def backward(self, grad):
        bounds = np.cumsum(self.saved["sizes"])[:-1]
        return tuple(np.split(grad, bounds, axis=self.saved["axis"]))


class Gather(Function):
    def forward(self, x: np.ndarray, index: np.ndarray, axis: int = 0) -> np.ndarray:
        index = np.asarray(index)
        if index.ndim != 1 or not np.issubdtype(index.dtype, np.integer):
            raise ShapeError("gather 的索引必须是一维整数数组")
        if not -x.ndim <= axis < x.ndim:
            raise ShapeError(f"轴 {axis} 超出张量维度 {x.ndim}")
        axis = axis % x.ndim
        if index.size and (index.min() < 0 or index.max() >= x.shape[axis]):
            raise ShapeError(f"gather 索引越界: 轴 {axis} 的长度为 {x.shape[axis]}")
        self.saved["index"], self.saved["axis"], self.saved["shape"] = index, axis, x.shape
        return np.take(x, index, axis=axis)

    def backward(self, grad):
        index, axis, shape = self.saved["index"], self.saved["axis"], self.saved["shape"]
        full = np.zeros(shape, dtype=grad.dtype)
        # 同一行可能被多次取用，需要累加
        np.add.at(np.moveaxis(full, axis, 0), index, np.moveaxis(grad, axis, 0))
        return (full,)


# *** 归一化与激活 ***

class Softmax(Function):
    def forward(self, x: np.ndarray, axis: int = -1) -> np.ndarray:
        if not -x.ndim <= axis < x.ndim:
            raise ShapeError(f"softmax 轴 {axis} 超出张量维度 {x.ndim}")
        shifted = x - x.max(axis=axis, keepdims=True)
        exp = np.exp(shifted)
        out = exp / exp.sum(axis=axis, keepdims=True)
        self.saved["out"], self.saved["axis"] = out, axis
        return out

    def backward(self, grad):
        out, axis = self.saved["out"], self.saved["axis"]
        return (out * (grad - (grad * out).sum(axis=axis, keepdims=True)),)


@dataclass
class BNState:
    """
    批归一化的运行统计量

    eval 模式在任何 train 模式更新之前使用初始值（均值0，方差1），这是约定而非错误。
    """
    channels: int
    dtype: np.dtype = np.dtype(np.float32)
    eps: float = BN_EPSILON
    momentum: float = BN_MOMENTUM
    running_mean: np.ndarray = field(default=None)
    running_var: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.running_mean is None:
            self.running_mean = np.zeros(self.channels, dtype=self.dtype)
        if self.running_var is None:
            self.running_var = np.ones(self.channels, dtype=self.dtype)


class BatchNorm(Function):
    """
    按通道归一化 (N, C, H, W)

    batch_stats=True 时 mean/var 是当前批次统计量，反向包含对统计量的求导；
    否则 mean/var 视为常量（eval 模式）。
    """

    def forward(self, x, gamma, beta, mean=None, var=None, eps=BN_EPSILON, batch_stats=True):
        view = (1, -1, 1, 1)
        inv_std = 1.0 / np.sqrt(var + eps)
        x_hat = (x - mean.reshape(view)) * inv_std.reshape(view)
        self.saved.update(x_hat=x_hat, inv_std=inv_std, gamma=gamma, batch_stats=batch_stats)
        return (x_hat * gamma.reshape(view) + beta.reshape(view)).astype(x.dtype, copy=False)

    def backward(self, grad):
        x_hat, inv_std, gamma = self.saved["x_hat"], self.saved["inv_std"], self.saved["gamma"]
        view = (1, -1, 1, 1)
        axes = (0, 2, 3)
        grad_gamma = (grad * x_hat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        grad_x_hat = grad * gamma.reshape(view)
        if self.saved["batch_stats"]:
            count = grad.shape[0] * grad.shape[2] * grad.shape[3]
            grad_x = (inv_std.reshape(view) / count) * (
                count * grad_x_hat
                - grad_x_hat.sum(axis=axes, keepdims=True)
                - x_hat * (grad_x_hat * x_hat).sum(axis=axes, keepdims=True)
            )
        else:
            grad_x = grad_x_hat * inv_std.reshape(view)
        return grad_x.astype(grad.dtype, copy=False), grad_gamma, grad_beta


class CrossEntropy(Function):
    def forward(self, logits: np.ndarray, targets: np.ndarray = None) -> np.ndarray:
        if logits.ndim != 2:
            raise ShapeError(f"cross_entropy 需要 (N, C) 的logits，当前形状为 {logits.shape}")
        targets = np.asarray(targets)
        n, classes = logits.shape
        if targets.shape != (n,):
            raise ShapeError(f"标签数量 {targets.shape} 与 logits 批大小 {n} 不一致")
        if n and (targets.min() < 0 or targets.max() >= classes):
            raise TargetIndexError(f"标签必须位于 [0, {classes})，实际范围 [{targets.min()}, {targets.max()}]")
        peak = logits.max(axis=1, keepdims=True)
        log_norm = peak + np.log(np.exp(logits - peak).sum(axis=1, keepdims=True))
        log_probs = logits - log_norm
        self.saved["probs"], self.saved["targets"] = np.exp(log_probs), targets
        return np.asarray(-log_probs[np.arange(n), targets].mean(), dtype=logits.dtype)

    def backward(self, grad):
        probs, targets = self.saved["probs"], self.saved["targets"]
        n = probs.shape[0]
        delta = probs.copy()
        delta[np.arange(n), targets] -= 1
        return (delta * (grad / grad.dtype.type(n)),)


# *** 函数式入口 ***

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return Add.apply(a, as_tensor(b, like=a))


def multiply(a: ArrayLike, b: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return Multiply.apply(a, as_tensor(b, like=a))


def scale(x: Tensor, factor: float) -> Tensor:
    """乘以标量常数"""
    return Scale.apply(as_tensor(x), factor=float(factor))


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(as_tensor(x))


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """
    矩阵乘法 (..., m, k) @ (..., k, n)，批维度按 numpy 规则广播

    Raises:
        ShapeError: 内维不一致，错误信息包含两侧形状
    """
    a = as_tensor(a)
    return MatMul.apply(a, as_tensor(b, like=a))


def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(as_tensor(x), axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(as_tensor(x), axis=axis, keepdims=keepdims)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(as_tensor(x), shape=tuple(shape))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    """axes 为空时交换最后两个轴"""
    return Transpose.apply(as_tensor(x), axes=None if axes is None else tuple(axes))


def concatenate(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concatenate 至少需要一个张量")
    if len(tensors) == 1:
        return tensors[0]
    return Concatenate.apply(*tensors, axis=axis)


def gather(x: Tensor, index: np.ndarray, axis: int = 0) -> Tensor:
    """沿 axis 按整数索引取切片（相对位置查表）"""
    return Gather.apply(as_tensor(x), index=np.asarray(index), axis=axis)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return Softmax.apply(as_tensor(x), axis=axis)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BNState, training: bool) -> Tensor:
    """
    按通道批归一化

    Args:
        x: (N, C, H, W)
        gamma, beta: (C,) 可学习缩放与平移
        state: 运行统计量，train 模式下以 momentum 更新
        training: True 使用批统计量，False 使用运行统计量

    Raises:
        ShapeError: 形状不符，或 train 模式下每个通道的样本数 N*H*W < 2
    """
    if x.ndim != 4 or x.shape[1] != state.channels:
        raise ShapeError(f"batch_norm 需要 (N, {state.channels}, H, W)，当前形状为 {x.shape}")
    if not training:
        return BatchNorm.apply(
            x, gamma, beta,
            mean=state.running_mean.astype(x.dtype), var=state.running_var.astype(x.dtype),
            eps=state.eps, batch_stats=False,
        )
    count = x.shape[0] * x.shape[2] * x.shape[3]
    if count < 2:
        raise ShapeError(f"train 模式下每个通道至少需要2个值，当前 N*H*W={count}")
    batch_mean = x.data.mean(axis=(0, 2, 3))
    batch_var = x.data.var(axis=(0, 2, 3))
    momentum = state.momentum
    unbiased = batch_var * (count / (count - 1))
    state.running_mean = ((1 - momentum) * state.running_mean + momentum * batch_mean).astype(state.running_mean.dtype)
    state.running_var = ((1 - momentum) * state.running_var + momentum * unbiased).astype(state.running_var.dtype)
    return BatchNorm.apply(x, gamma, beta, mean=batch_mean, var=batch_var, eps=state.eps, batch_stats=True)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """
    批平均交叉熵，在对数空间用 log-sum-exp 计算

    Raises:
        TargetIndexError: 标签越界
    """
    return CrossEntropy.apply(as_tensor(logits), targets=np.asarray(targets, dtype=np.int64))


__all__ = [
    "BNState", "BN_EPSILON", "BN_MOMENTUM",
    "add", "multiply", "scale", "relu", "matmul", "sum", "mean", "reshape", "transpose",
    "concatenate", "gather", "softmax", "batch_norm", "cross_entropy",
]

