from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Mapping

from .errors import ConfigError


@dataclass
class ModelConfig:
    """
    Axial-LOB 模型配置数据类

    属性:
        input_height (int): 时间维长度（最近事件数），默认40
        input_width (int): 特征维长度（10档 × 买卖 × 价量），默认40
        input_channels (int): 输入通道数，默认1（单通道图像）
        stem_channels (int): 入口1x1映射后的通道数 C₁，默认16
        block_channels (int): 门控轴向块内部通道数 C₂，默认16
        heads (int): 每个轴向注意力的头数，默认2
        layers (int): 门控轴向块的层数，默认2
        classes (int): 类别数（下跌/平稳/上涨），默认3
        seed (int): 初始化随机种子
    """
    input_height: int = 40
    input_width: int = 40
    input_channels: int = 1
    stem_channels: int = 16
    block_channels: int = 16
    heads: int = 2
    layers: int = 2
    classes: int = 3
    seed: int = 0

    def __post_init__(self):
        """
        验证规则:
        1. 各尺寸、通道数、头数、层数必须大于0
        2. block_channels 必须能被 heads 整除
        3. 类别数至少为2

        Raises:
            ConfigError: 当任何参数不满足要求时抛出
        """
        for name in ("input_height", "input_width", "input_channels", "stem_channels",
                     "block_channels", "heads", "layers"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"model.{name} 必须大于0")
        if self.block_channels % self.heads != 0:
            raise ConfigError(f"block_channels={self.block_channels} 不能被 heads={self.heads} 整除")
        if self.classes < 2:
            raise ConfigError("类别数至少为2")

    def to_items(self, prefix: str = "model.") -> Dict[str, Any]:
        """扁平化为带前缀的键值对（不含 seed，种子在运行配置顶层）"""
        return {f"{prefix}{k}": v for k, v in asdict(self).items() if k != "seed"}

    @classmethod
    def from_items(cls, items: Mapping[str, str], seed: int = 0, prefix: str = "model.") -> "ModelConfig":
        """从扁平键值对（值为文本）构造，未给出的键取默认值"""
        kwargs: Dict[str, Any] = {}
        known = {f.name for f in fields(cls)} - {"seed"}
        for key, value in items.items():
            if not key.startswith(prefix):
                continue
            name = key[len(prefix):]
            if name not in known:
                raise ConfigError(f"未知的配置项: {key}")
            try:
                kwargs[name] = int(value)
            except (TypeError, ValueError):
                raise ConfigError(f"配置项 {key} 必须是整数，当前为 {value!r}")
        return cls(seed=seed, **kwargs)


def canonical_text(items: Mapping[str, Any]) -> str:
    """规范文本：键排序，每行一个 `key = value`"""
    lines = [f"{key} = {format_value(items[key])}" for key in sorted(items)]
    return "\n".join(lines) + "\n"


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def parse_flat_text(text: str, source: str = "<text>") -> Dict[str, str]:
    """
    解析扁平键值文本：`#` 开头为注释，空行忽略，其余每行 `key = value`

    Raises:
        ConfigError: 行格式错误或键重复，消息中带行号
    """
    items: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: 需要 `key = value` 格式，实际为 {raw!r}")
        if key in items:
            raise ConfigError(f"{source}:{lineno}: 配置项 {key} 重复")
        items[key] = value
    return items
