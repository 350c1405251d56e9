"""
Axial-LOB 网络

    输入 (N, 1, 40, 40)
      └─ stem: 1x1 映射 → BN → ReLU                         (N, C₁, 40, 40)
      └─ block.layer0 / block.layer1，每层:
             h = ReLU(BN(1x1 映射 C₁→C₂))
             h = 高度轴注意力(宽度轴注意力(h))
             out = ReLU(x + BN(1x1 映射 C₂→C₁))               残差在后置BN之后相加
      └─ head: 全局平均池化 → 全连接 C₁→3                    (N, 3) logits
"""
import logging
from enum import Enum
from typing import Optional

import numpy as np

from . import ops
from .attention import AxialPair
from .errors import ShapeError
from .layers import BatchNorm2d, ChannelMap, Linear, Module
from .model_config import ModelConfig
from .tensor import Tensor

logger = logging.getLogger(__name__)


class RunMode(Enum):
    """前向模式：训练模式使用批统计量并更新BN运行统计量，评估模式使用运行统计量"""
    TRAIN = "train"
    EVAL = "eval"


class GatedBlockLayer(AxialPair):
    """门控轴向块中的一层：1x1+BN+ReLU → 宽度/高度轴向注意力 → 1x1+BN，加残差后ReLU"""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.conv_in = ChannelMap(config.stem_channels, config.block_channels, rng)
        self.bn_in = BatchNorm2d(config.block_channels)
        super().__init__(config.block_channels, config.heads, config.input_height, config.input_width, rng)
        self.conv_out = ChannelMap(config.block_channels, config.stem_channels, rng)
        self.bn_out = BatchNorm2d(config.stem_channels)

    def forward(self, x: Tensor) -> Tensor:
        h = ops.relu(self.bn_in(self.conv_in(x)))
        h = super().forward(h)
        return ops.relu(ops.add(x, self.bn_out(self.conv_out(h))))


class GatedAxialBlock(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.depth = config.layers
        for i in range(config.layers):
            setattr(self, f"layer{i}", GatedBlockLayer(config, rng))

    def forward(self, x: Tensor) -> Tensor:
        for i in range(self.depth):
            x = getattr(self, f"layer{i}")(x)
        return x


class Stem(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.conv = ChannelMap(config.input_channels, config.stem_channels, rng)
        self.bn = BatchNorm2d(config.stem_channels)

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(self.bn(self.conv(x)))


class AxialLobModel(Module):
    """
    Axial-LOB 模型

    参数名按模块路径唯一，例如 "block.layer0.width_attn.r_q"。
    初始化完全由 (config, seed) 决定。
    """

    def __init__(self, config: ModelConfig, seed: Optional[int] = None):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(config.seed if seed is None else seed)
        self.stem = Stem(config, rng)
        self.block = GatedAxialBlock(config, rng)
        self.head = Linear(config.stem_channels, config.classes, rng)
        self.bind_names()

    def forward(self, x: Tensor, mode: Optional[RunMode] = None) -> Tensor:
        """
        Args:
            x: (N, C_in, H, W) 窗口批
            mode: 指定时先切换训练/评估模式

        Returns:
            (N, classes) logits，概率由下游 softmax 得到
        """
        if mode is not None:
            self.train(RunMode(mode) is RunMode.TRAIN)
        cfg = self.config
        expected = (cfg.input_channels, cfg.input_height, cfg.input_width)
        if x.ndim != 4 or tuple(x.shape[1:]) != expected:
            raise ShapeError(f"模型输入应为 (N, {expected[0]}, {expected[1]}, {expected[2]})，当前形状为 {x.shape}")
        h = self.block(self.stem(x))
        pooled = ops.mean(h, axis=(2, 3))
        return self.head(pooled)

    def gates(self):
        """全部门控参数（g_q, g_k, g_v）"""
        return [p for name, p in self.named_parameters() if name.rsplit(".", 1)[-1].startswith("g_")]


def init(config: ModelConfig, seed: Optional[int] = None) -> AxialLobModel:
    """按配置和种子确定性地初始化模型"""
    model = AxialLobModel(config, seed)
    logger.debug("模型初始化完成: %d 个参数", parameter_count(model))
    return model


def parameter_count(model: Module) -> int:
    """全部可学习标量个数（含门控、相对位置表、BN仿射参数）"""
    return int(sum(p.size for p in model.parameters()))
