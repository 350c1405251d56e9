from dataclasses import asdict, dataclass
from typing import Any, Dict

from .errors import ConfigError


@dataclass
class TrainConfig:
    """
    训练配置数据类

    属性:
        batch_size (int): 小批量大小，默认64
        epochs (int): 最多训练轮数，默认100
        base_lr (float): 初始学习率，默认0.01
        momentum (float): 动量系数 μ，默认0.9
        gate_unfreeze_epoch (int): 门控从该轮开始参与更新，默认5
        early_stop_patience (int): 验证损失连续多少轮不下降即停止，默认10
        max_steps_per_epoch (int): 每轮最多步数，0 表示遍历全部训练窗口
        seed (int): 每轮打乱顺序所用的种子
    """
    batch_size: int = 64
    epochs: int = 100
    base_lr: float = 0.01
    momentum: float = 0.9
    gate_unfreeze_epoch: int = 5
    early_stop_patience: int = 10
    max_steps_per_epoch: int = 0
    seed: int = 0

    def __post_init__(self):
        """
        Raises:
            ConfigError: 当任何参数不满足要求时抛出
        """
        if self.batch_size < 1:
            raise ConfigError("batch_size 至少为1")
        if self.epochs < 1:
            raise ConfigError("epochs 至少为1")
        if self.base_lr <= 0:
            raise ConfigError("base_lr 必须大于0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum 必须在 [0, 1) 内")
        if not 0 <= self.gate_unfreeze_epoch <= self.epochs:
            raise ConfigError("gate_unfreeze_epoch 必须在 [0, epochs] 内")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience 至少为1")
        if self.max_steps_per_epoch < 0:
            raise ConfigError("max_steps_per_epoch 不能为负数")

    def to_items(self, prefix: str = "train.") -> Dict[str, Any]:
        return {f"{prefix}{k}": v for k, v in asdict(self).items() if k != "seed"}
