"""
稠密张量与反向模式自动微分

Tensor 持有一个行主序（C-contiguous）的 numpy 数组；每个算子是一个 Function，
前向时记录到当前线程的 Tape 上，backward 按执行顺序的严格逆序回放。
"""
from __future__ import annotations

import logging
import threading
from contextlib import contextmanager
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ShapeError, TapeError

logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]

_local = threading.local()


def get_default_dtype() -> np.dtype:
    """当前线程创建张量时使用的精度，训练默认 float32"""
    return getattr(_local, "dtype", np.dtype(np.float32))


@contextmanager
def default_dtype(dtype) -> Iterator[None]:
    """
    临时切换默认精度，主要用于 float64 下的梯度检查

    示例:
        >>> with default_dtype(np.float64):
        ...     x = Tensor([1.0, 2.0])
    """
    previous = get_default_dtype()
    _local.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _local.dtype = previous


class Tape:
    """
    按执行顺序记录算子节点的磁带

    每个线程一条磁带。backward 只回放从 loss 可达的节点，顺序为执行顺序的逆序；
    回放结束后，loss 及其之前记录的所有节点都被标记为已消费并释放。
    """

    def __init__(self):
        self.records: List["Function"] = []
        self.enabled: bool = True
        self._counter: int = 0

    @classmethod
    def current(cls) -> "Tape":
        tape = getattr(_local, "tape", None)
        if tape is None:
            tape = cls()
            _local.tape = tape
        return tape

    def record(self, fn: "Function") -> None:
        fn.seq = self._counter
        self._counter += 1
        self.records.append(fn)

    def backward_order(self, root: "Function") -> List["Function"]:
        """返回从 root 可达的节点，按执行顺序逆序排列"""
        reachable = set()
        stack = [root]
        while stack:
            fn = stack.pop()
            if id(fn) in reachable:
                continue
            if fn.consumed:
                raise TapeError("计算图已被消费，请重新执行前向计算后再调用 backward")
            reachable.add(id(fn))
            for parent in fn.parents:
                if parent._ctx is not None:
                    stack.append(parent._ctx)
        return [fn for fn in reversed(self.records) if id(fn) in reachable and fn.seq <= root.seq]

    def release(self, upto_seq: int) -> None:
        """释放 seq <= upto_seq 的全部记录"""
        kept = []
        for fn in self.records:
            if fn.seq <= upto_seq:
                fn.consumed = True
                fn.saved = None
            else:
                kept.append(fn)
        self.records = kept

    def clear(self) -> None:
        """丢弃全部未回放的记录；之后对这些节点调用 backward 会抛出 TapeError"""
        for fn in self.records:
            fn.consumed = True
            fn.saved = None
        self.records = []


@contextmanager
def no_grad() -> Iterator[None]:
    """在该上下文中执行的算子不记录到磁带，也不构建计算图"""
    tape = Tape.current()
    previous = tape.enabled
    tape.enabled = False
    try:
        yield
    finally:
        tape.enabled = previous


def is_grad_enabled() -> bool:
    return Tape.current().enabled


class Tensor:
    """
    稠密N维张量

    属性:
        data (np.ndarray): 行主序数据，product(shape) == data.size
        requires_grad (bool): 是否需要梯度
        grad (np.ndarray | None): 与 data 同形状的梯度累加区
    """

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
                dtype = data.dtype
            else:
                dtype = get_default_dtype()
        self.data: np.ndarray = np.ascontiguousarray(np.asarray(data, dtype=dtype))
        self.requires_grad: bool = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._ctx: Optional["Function"] = None

    # *** 基本属性 ***
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() 只能用于单元素张量，当前形状为 {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # *** 运算符，具体实现在 ops 中 ***
    def __add__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.add(self, ops.scale(as_tensor(other, like=self), -1.0))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.add(ops.scale(self, -1.0), other)

    def __neg__(self) -> "Tensor":
        from . import ops
        return ops.scale(self, -1.0)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.multiply(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.matmul(self, other)

    def reshape(self, *shape) -> "Tensor":
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """
    可学习参数

    name 在模型内唯一（如 "block.layer0.width_attn.r_q"）；
    trainable=False 时优化器跳过该参数（用于门控在第5轮之前冻结）。
    """

    def __init__(self, data: ArrayLike, name: str = "", trainable: bool = True, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.trainable = trainable

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape}, trainable={self.trainable})"


def as_tensor(value: ArrayLike, like: Optional[Tensor] = None) -> Tensor:
    """把常量包装为不需要梯度的张量，精度跟随 like"""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype or get_default_dtype()), requires_grad=False)


class Function:
    """
    可微算子基类

    子类实现 forward(*arrays, **kwargs) -> ndarray 与 backward(grad) -> 每个输入的梯度。
    需要在反向时使用的中间量存放在 self.saved 中，回放结束后统一释放。
    """

    def __init__(self, *parents: Tensor):
        self.parents: Tuple[Tensor, ...] = parents
        self.saved: Optional[dict] = {}
        self.seq: int = -1
        self.consumed: bool = False
        self.out_grad: Optional[np.ndarray] = None

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *tensors: Tensor, **kwargs) -> Tensor:
        fn = cls(*tensors)
        out = fn.forward(*[t.data for t in tensors], **kwargs)
        tape = Tape.current()
        requires_grad = tape.enabled and any(t.requires_grad for t in tensors)
        result = Tensor(out, requires_grad=requires_grad, dtype=out.dtype)
        if requires_grad:
            result._ctx = fn
            tape.record(fn)
        else:
            fn.saved = None
        return result


def _accumulate(target: Optional[np.ndarray], grad: np.ndarray) -> np.ndarray:
    return grad.copy() if target is None else target + grad


def backward(loss: Tensor) -> None:
    """
    从标量 loss 反向传播，把梯度累加到所有可达叶子张量（参数）的 grad 上

    Raises:
        TapeError: loss 不是标量，或其计算图已被消费
    """
    if loss.size != 1:
        raise TapeError(f"backward 只能作用于标量，当前形状为 {loss.shape}")
    seed = np.ones_like(loss.data)
    if loss._ctx is None:
        if not loss.requires_grad:
            raise TapeError("loss 不在任何计算图上")
        loss.grad = _accumulate(loss.grad, seed)
        return

    root = loss._ctx
    tape = Tape.current()
    order = tape.backward_order(root)
    root.out_grad = seed
    for fn in order:
        grad = fn.out_grad
        if grad is None:
            continue
        parent_grads = fn.backward(grad)
        for parent, parent_grad in zip(fn.parents, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent._ctx is not None:
                parent._ctx.out_grad = _accumulate(parent._ctx.out_grad, parent_grad)
            else:
                parent.grad = _accumulate(parent.grad, parent_grad)
        fn.out_grad = None
    tape.release(root.seq)
