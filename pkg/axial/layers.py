"""
网络层基础设施

Module 是所有层的基类，负责参数注册（按属性赋值顺序）、命名、训练/评估模式切换。
"""
from abc import ABC, abstractmethod
from typing import Dict, Iterator, List, Tuple

import numpy as np

from . import ops
from .errors import ShapeError
from .tensor import Parameter, Tape, Tensor, get_default_dtype

# 权重初始化：U(-g/sqrt(fan_in), g/sqrt(fan_in))
INIT_GAIN = 1.0


def scaled_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = INIT_GAIN / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(get_default_dtype())


class Module(ABC):
    """层基类"""

    def __init__(self):
        self.training = True

    @abstractmethod
    def forward(self, *args, **kwargs) -> Tensor:
        """前向计算"""
        pass

    def __call__(self, *args, **kwargs) -> Tensor:
        return self.forward(*args, **kwargs)

    def children(self) -> Iterator[Tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield f"{prefix}{name}", value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=f"{prefix}{name}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def local_buffers(self) -> Dict[str, np.ndarray]:
        """本层自身的非学习状态（如BN运行统计量），子类覆盖"""
        return {}

    def set_local_buffer(self, name: str, value: np.ndarray) -> None:
        raise KeyError(name)

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, value in self.local_buffers().items():
            yield f"{prefix}{name}", value
        for name, child in self.children():
            yield from child.named_buffers(prefix=f"{prefix}{name}.")

    def set_buffer(self, path: str, value: np.ndarray) -> None:
        head, _, rest = path.partition(".")
        if not rest:
            self.set_local_buffer(head, value)
            return
        child = vars(self).get(head)
        if not isinstance(child, Module):
            raise KeyError(path)
        child.set_buffer(rest, value)

    def bind_names(self) -> None:
        """把参数路径写入 Parameter.name"""
        for name, param in self.named_parameters():
            param.name = name

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        """切换到评估模式，并清空当前线程磁带上没有做 backward 的前向记录"""
        Tape.current().clear()
        return self.train(False)

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        """参数与缓冲区的副本，键为路径"""
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: value.copy() for name, value in self.named_buffers()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        for name, value in state.items():
            if name in params:
                params[name].data = value.copy()
                params[name].grad = None
            else:
                self.set_buffer(name, value.copy())

    def astype(self, dtype) -> "Module":
        """转换全部参数与缓冲区的精度（float64 用于梯度检查）"""
        for param in self.parameters():
            param.data = param.data.astype(dtype)
            param.grad = None
        for name, value in list(self.named_buffers()):
            self.set_buffer(name, value.astype(dtype))
        return self


class ChannelMap(Module):
    """
    1x1 卷积：只在通道维上做线性映射，不做空间卷积

    输入 (N, C_in, H, W)，输出 (N, C_out, H, W)。
    """

    def __init__(self, channels_in: int, channels_out: int, rng: np.random.Generator, bias: bool = False):
        super().__init__()
        self.channels_in = channels_in
        self.channels_out = channels_out
        self.weight = Parameter(scaled_uniform(rng, (channels_out, channels_in), channels_in))
        if bias:
            self.bias = Parameter(np.zeros(channels_out, dtype=get_default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return channel_map(x, self.weight, getattr(self, "bias", None))


def channel_map(x: Tensor, weight: Tensor, bias: Tensor = None) -> Tensor:
    """对 (N, C, H, W) 做逐位置的通道线性映射 weight (C_out, C_in)"""
    if x.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"通道映射需要 (N, {weight.shape[1]}, H, W)，当前形状为 {x.shape}")
    n, c, h, w = x.shape
    y = ops.matmul(weight, ops.reshape(x, (n, c, h * w)))
    if bias is not None:
        y = ops.add(y, ops.reshape(bias, (-1, 1)))
    return ops.reshape(y, (n, weight.shape[0], h, w))


class BatchNorm2d(Module):
    """按通道批归一化，γ 初始化为1，β 初始化为0"""

    def __init__(self, channels: int):
        super().__init__()
        dtype = get_default_dtype()
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.state = ops.BNState(channels=channels, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return ops.batch_norm(x, self.gamma, self.beta, self.state, training=self.training)

    def local_buffers(self) -> Dict[str, np.ndarray]:
        return {"running_mean": self.state.running_mean, "running_var": self.state.running_var}

    def set_local_buffer(self, name: str, value: np.ndarray) -> None:
        if name not in ("running_mean", "running_var"):
            raise KeyError(name)
        if value.shape != (self.state.channels,):
            raise ShapeError(f"{name} 形状应为 ({self.state.channels},)，实际为 {value.shape}")
        setattr(self.state, name, value)


class Linear(Module):
    """全连接层 y = x W + b"""

    def __init__(self, features_in: int, features_out: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Parameter(scaled_uniform(rng, (features_in, features_out), features_in))
        self.bias = Parameter(np.zeros(features_out, dtype=get_default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.weight.shape[0]:
            raise ShapeError(f"全连接层需要 (N, {self.weight.shape[0]})，当前形状为 {x.shape}")
        return ops.add(ops.matmul(x, self.weight), self.bias)
