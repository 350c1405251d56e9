"""
注意力机制

- full_attention_2d: 完整二维自注意力，O(h²w²)，只作为对照
- gated_axial_attention: 带门控相对位置编码的单轴注意力
- axial_pair: 先宽度轴、后高度轴的两次轴向注意力，恢复全局感受野
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .layers import Module, channel_map, scaled_uniform
from .tensor import Parameter, Tensor, get_default_dtype, no_grad

# 门控初始值：为1时第0轮等价于不带门控的位置敏感注意力
GATE_INIT = 1.0


class AttentionAxis(Enum):
    """
    注意力作用的轴

    - WIDTH: 沿特征维（输入的 W 轴）
    - HEIGHT: 沿时间维（输入的 H 轴）
    """
    WIDTH = "width"
    HEIGHT = "height"


@dataclass
class AxialAttentionConfig:
    """
    单轴注意力配置

    属性:
        axis: 作用轴
        channels_in: 输入通道数
        channels_out: 输出通道数，必须能被 heads 整除
        heads: 注意力头数
        span: 作用轴的长度 L，前向时必须与输入一致
    """
    axis: AttentionAxis
    channels_in: int
    channels_out: int
    heads: int
    span: int

    def __post_init__(self):
        self.axis = AttentionAxis(self.axis)
        if self.channels_in <= 0 or self.channels_out <= 0:
            raise ConfigError("通道数必须大于0")
        if self.heads <= 0:
            raise ConfigError("注意力头数必须大于0")
        if self.span <= 0:
            raise ConfigError("注意力跨度必须大于0")
        if self.channels_out % self.heads != 0:
            raise ConfigError(f"channels_out={self.channels_out} 不能被 heads={self.heads} 整除")

    @property
    def head_dim(self) -> int:
        return self.channels_out // self.heads


def relative_index(span: int) -> np.ndarray:
    """相对位置表索引：idx[i, h] = (i - h) + span - 1，取值 [0, 2*span-2]"""
    positions = np.arange(span)
    return positions[:, None] - positions[None, :] + span - 1


class GatedAxialLayer(Module):
    """
    门控位置敏感轴向注意力层

    参数:
        w_q, w_k, w_v: (C_out, C_in) 的1x1通道映射
        r_q, r_k, r_v: 每个头一张 (2L-1, d) 的相对位置表
        g_q, g_k, g_v: 每层一个标量门控，只作用于位置偏置项
        w_o: (C_out, C_out) 多头拼接后的输出投影
    """

    def __init__(self, config: AxialAttentionConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        c_in, c_out, d = config.channels_in, config.channels_out, config.head_dim
        table = (config.heads, 2 * config.span - 1, d)
        self.w_q = Parameter(scaled_uniform(rng, (c_out, c_in), c_in))
        self.w_k = Parameter(scaled_uniform(rng, (c_out, c_in), c_in))
        self.w_v = Parameter(scaled_uniform(rng, (c_out, c_in), c_in))
        self.r_q = Parameter(scaled_uniform(rng, table, d))
        self.r_k = Parameter(scaled_uniform(rng, table, d))
        self.r_v = Parameter(scaled_uniform(rng, table, d))
        gate = np.full(1, GATE_INIT, dtype=get_default_dtype())
        self.g_q = Parameter(gate.copy())
        self.g_k = Parameter(gate.copy())
        self.g_v = Parameter(gate.copy())
        self.w_o = Parameter(scaled_uniform(rng, (c_out, c_out), c_out))

    def gates(self) -> Tuple[Parameter, Parameter, Parameter]:
        return self.g_q, self.g_k, self.g_v

    def forward(self, x: Tensor) -> Tensor:
        return gated_axial_attention(x, self, self.config)


def _as_batch(x: Tensor) -> Tuple[Tensor, bool]:
    if x.ndim == 3:
        return ops.reshape(x, (1,) + x.shape), True
    if x.ndim != 4:
        raise ShapeError(f"注意力输入必须是 (C, H, W) 或 (N, C, H, W)，当前形状为 {x.shape}")
    return x, False


def _to_sequences(t: Tensor, axis: AttentionAxis, heads: int) -> Tensor:
    """(N, C, H, W) -> (B, heads, L, d)，其余轴并入批维"""
    n, c, h, w = t.shape
    t = ops.reshape(t, (n, heads, c // heads, h, w))
    if axis is AttentionAxis.WIDTH:
        t = ops.transpose(t, (0, 3, 1, 4, 2))
        return ops.reshape(t, (n * h, heads, w, c // heads))
    t = ops.transpose(t, (0, 4, 1, 3, 2))
    return ops.reshape(t, (n * w, heads, h, c // heads))


def _from_sequences(t: Tensor, axis: AttentionAxis, shape: Tuple[int, int, int, int]) -> Tensor:
    """(B, heads, L, d) -> (N, heads*d, H, W)，各头在通道维上连续排列"""
    n, c, h, w = shape
    heads, d = t.shape[1], t.shape[3]
    if axis is AttentionAxis.WIDTH:
        t = ops.reshape(t, (n, h, heads, w, d))
        t = ops.transpose(t, (0, 2, 4, 1, 3))
    else:
        t = ops.reshape(t, (n, w, heads, h, d))
        t = ops.transpose(t, (0, 2, 4, 3, 1))
    return ops.reshape(t, (n, heads * d, h, w))


def _relative_table(table: Tensor, span: int) -> Tensor:
    """(heads, 2L-1, d) -> (heads, L_i, L_h, d)，按偏移 i-h 查表"""
    heads, _, d = table.shape
    flat = ops.gather(table, relative_index(span).reshape(-1), axis=1)
    return ops.reshape(flat, (heads, span, span, d))


def gated_axial_attention(
    x: Tensor,
    layer: GatedAxialLayer,
    cfg: Optional[AxialAttentionConfig] = None,
    return_weights: bool = False,
) -> Union[Tensor, Tuple[Tensor, np.ndarray]]:
    """
    沿配置轴的门控位置敏感注意力

    对该轴的每一条一维切片、每个头：
        y_i = Σ_h softmax_h(q_iᵀk_h + g_q·q_iᵀr^q_{i-h} + g_k·k_hᵀr^k_{i-h}) (v_h + g_v·r^v_{i-h})
    softmax 只在该轴的 L 个位置上归一化，其余轴视为批维；各头结果经 multi_head_combine 合并。

    Args:
        x: (C, H, W) 或 (N, C, H, W)
        layer: 层参数
        cfg: 配置，默认取 layer.config
        return_weights: 同时返回注意力权重 (B, heads, L, L)

    Raises:
        ConfigError: 作用轴长度与 cfg.span 不一致
    """
    cfg = cfg or layer.config
    x, squeeze = _as_batch(x)
    n, c, h, w = x.shape
    if c != cfg.channels_in:
        raise ShapeError(f"输入通道 {c} 与配置 channels_in={cfg.channels_in} 不一致")
    length = w if cfg.axis is AttentionAxis.WIDTH else h
    if length != cfg.span:
        raise ConfigError(f"{cfg.axis.value} 轴长度 {length} 与配置 span={cfg.span} 不一致")

    q = _to_sequences(channel_map(x, layer.w_q), cfg.axis, cfg.heads)
    k = _to_sequences(channel_map(x, layer.w_k), cfg.axis, cfg.heads)
    v = _to_sequences(channel_map(x, layer.w_v), cfg.axis, cfg.heads)
    r_q = _relative_table(layer.r_q, cfg.span)
    r_k = _relative_table(layer.r_k, cfg.span)
    r_v = _relative_table(layer.r_v, cfg.span)

    # 内容项 q_iᵀk_h: (B, heads, L_i, L_h)
    content = ops.matmul(q, ops.transpose(k))
    # 位置项按 (heads, 位置) 分批做矩阵乘法，批维 B 留在矩阵行上
    q_bias = ops.matmul(ops.transpose(q, (1, 2, 0, 3)), ops.transpose(r_q, (0, 1, 3, 2)))
    q_bias = ops.transpose(q_bias, (2, 0, 1, 3))
    k_bias = ops.matmul(ops.transpose(k, (1, 2, 0, 3)), ops.transpose(r_k, (0, 2, 3, 1)))
    k_bias = ops.transpose(k_bias, (2, 0, 3, 1))
    logits = ops.add(content, ops.add(ops.multiply(q_bias, layer.g_q), ops.multiply(k_bias, layer.g_k)))
    weights = ops.softmax(logits, axis=-1)

    values = ops.matmul(weights, v)
    v_bias = ops.matmul(ops.transpose(weights, (1, 2, 0, 3)), r_v)
    v_bias = ops.transpose(v_bias, (2, 0, 1, 3))
    out = ops.add(values, ops.multiply(v_bias, layer.g_v))

    merged = _from_sequences(out, cfg.axis, (n, cfg.channels_out, h, w))
    # 各头已在通道维上连续排列，等价于逐头拼接
    y = multi_head_combine([merged], layer.w_o)
    if squeeze:
        y = ops.reshape(y, y.shape[1:])
    if return_weights:
        return y, weights.data
    return y


def attention_weights(x: Tensor, layer: GatedAxialLayer) -> np.ndarray:
    """注意力权重 (B, heads, L, L)，最后一维在该轴位置上和为1"""
    with no_grad():
        _, weights = gated_axial_attention(x, layer, return_weights=True)
    return weights


def multi_head_combine(head_outputs: Sequence[Tensor], w_o: Tensor) -> Tensor:
    """
    沿通道维拼接各头输出，再做线性投影 W^O

    Args:
        head_outputs: 每个元素为 (N, d, H, W) 或 (d, H, W)，空间形状必须一致
        w_o: (C_out, Σd)

    Raises:
        ShapeError: 各头空间形状不一致
    """
    if not head_outputs:
        raise ShapeError("multi_head_combine 至少需要一个头")
    batched = [_as_batch(t) for t in head_outputs]
    squeeze = batched[0][1]
    tensors = [t for t, _ in batched]
    spatial = {(t.shape[0],) + t.shape[2:] for t in tensors}
    if len(spatial) != 1:
        raise ShapeError(f"各头的空间形状不一致: {sorted(spatial)}")
    y = channel_map(ops.concatenate(tensors, axis=1), w_o)
    return ops.reshape(y, y.shape[1:]) if squeeze else y


@dataclass
class FullAttentionWeights:
    """完整二维注意力的投影矩阵，形状均为 (C_out, C_in)"""
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor


def full_attention_2d(x: Tensor, weights: FullAttentionWeights) -> Tensor:
    """
    完整二维自注意力（单头），对每个位置 (i, j):
        y_ij = Σ_hw softmax_hw(q_ijᵀ k_hw) v_hw
    softmax 在全部 H*W 个位置上归一化，代价 O(H²W²)，仅用作对照。
    """
    x, squeeze = _as_batch(x)
    n, c, h, w = x.shape
    c_out = weights.w_v.shape[0]
    q = ops.reshape(channel_map(x, weights.w_q), (n, -1, h * w))
    k = ops.reshape(channel_map(x, weights.w_k), (n, -1, h * w))
    v = ops.reshape(channel_map(x, weights.w_v), (n, c_out, h * w))
    attn = ops.softmax(ops.matmul(ops.transpose(q), k), axis=-1)
    y = ops.reshape(ops.matmul(v, ops.transpose(attn)), (n, c_out, h, w))
    return ops.reshape(y, y.shape[1:]) if squeeze else y


class AxialPair(Module):
    """先宽度轴、后高度轴的一对门控轴向注意力，各自独立参数"""

    def __init__(self, channels: int, heads: int, height: int, width: int, rng: np.random.Generator):
        super().__init__()
        self.width_attn = GatedAxialLayer(
            AxialAttentionConfig(AttentionAxis.WIDTH, channels, channels, heads, width), rng)
        self.height_attn = GatedAxialLayer(
            AxialAttentionConfig(AttentionAxis.HEIGHT, channels, channels, heads, height), rng)

    def forward(self, x: Tensor) -> Tensor:
        return axial_pair(x, self)


def axial_pair(x: Tensor, pair: AxialPair) -> Tensor:
    return pair.height_attn(pair.width_attn(x))
