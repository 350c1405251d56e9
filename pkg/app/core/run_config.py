"""
运行配置

文件格式为扁平的 `key = value` 文本，键带分区前缀：

    seed = 0
    model.heads = 2
    train.epochs = 20
    data.path = data/synth.csv
    data.horizon = 10
    fi2010.feature_rows = 0:40

规范形式为键排序后逐行写出；其 SHA-256 的前16位十六进制即配置哈希，
写入检查点与评估报告。
"""
import hashlib
import logging
import os
from dataclasses import fields
from typing import Annotated, Any, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, field_validator

from axial.errors import ConfigError
from axial.model_config import ModelConfig, canonical_text, parse_flat_text
from axial.train_config import TrainConfig
from lob.book import FEATURE_COUNT
from lob.ingest import IngestFormat
from lob.labeling import DEFAULT_ALPHA
from lob.windows import NormalizationMode

logger = logging.getLogger(__name__)

HASH_LENGTH = 16


def _parse_ranges(value: Any) -> List[Tuple[int, int]]:
    """"a:b,c:d" -> [(a, b), (c, d)]"""
    if isinstance(value, str):
        ranges = []
        for part in filter(None, (p.strip() for p in value.split(","))):
            start, sep, stop = part.partition(":")
            if not sep:
                raise ValueError(f"区间 {part!r} 应写作 start:stop")
            ranges.append((int(start), int(stop)))
        return ranges
    return value


def _format_ranges(ranges: Sequence[Tuple[int, int]]) -> str:
    return ",".join(f"{a}:{b}" for a, b in ranges)


class DataConfig(BaseModel):
    """数据与标注配置"""
    model_config = ConfigDict(extra="forbid")

    path: str = ""
    format: IngestFormat = IngestFormat.CANONICAL_CSV
    horizon: int = Field(10, ge=1)
    alpha: float = Field(DEFAULT_ALPHA, gt=0)
    normalization: NormalizationMode = NormalizationMode.ZSCORE
    keep_ranges: Annotated[List[Tuple[int, int]], BeforeValidator(_parse_ranges)] = Field(default_factory=list)

    def to_items(self) -> Dict[str, Any]:
        return {
            "data.path": self.path,
            "data.format": self.format.value,
            "data.horizon": self.horizon,
            "data.alpha": self.alpha,
            "data.normalization": self.normalization.value,
            "data.keep_ranges": _format_ranges(self.keep_ranges),
        }


class Fi2010Config(BaseModel):
    """fi2010-matrix 格式下40个原始特征所在的行号"""
    model_config = ConfigDict(extra="forbid")

    feature_rows: List[int] = Field(default_factory=lambda: list(range(FEATURE_COUNT)))

    @field_validator("feature_rows", mode="before")
    @classmethod
    def _parse_rows(cls, value: Any) -> Any:
        if not isinstance(value, str):
            return value
        rows: List[int] = []
        for part in filter(None, (p.strip() for p in value.split(","))):
            start, sep, stop = part.partition(":")
            rows.extend(range(int(start), int(stop)) if sep else [int(part)])
        return rows

    @field_validator("feature_rows")
    @classmethod
    def _check_count(cls, value: List[int]) -> List[int]:
        if len(value) != FEATURE_COUNT:
            raise ValueError(f"需要 {FEATURE_COUNT} 个行号，当前为 {len(value)} 个")
        return value

    def to_items(self) -> Dict[str, Any]:
        rows = self.feature_rows
        if rows == list(range(rows[0], rows[0] + len(rows))):
            text = f"{rows[0]}:{rows[0] + len(rows)}"
        else:
            text = ",".join(str(r) for r in rows)
        return {"fi2010.feature_rows": text}


class RunConfig(BaseModel):
    """一次运行的完整配置：模型、训练、数据与全局种子"""
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    fi2010: Fi2010Config = Field(default_factory=Fi2010Config)

    @classmethod
    def from_items(cls, items: Dict[str, str]) -> "RunConfig":
        """
        由扁平键值对构造

        Raises:
            ConfigError: 未知键、类型错误或取值不合法
        """
        allowed = {
            "model": {f.name for f in fields(ModelConfig)} - {"seed"},
            "train": {f.name for f in fields(TrainConfig)} - {"seed"},
            "data": set(DataConfig.model_fields),
            "fi2010": set(Fi2010Config.model_fields),
        }
        sections: Dict[str, Dict[str, str]] = {name: {} for name in allowed}
        seed = "0"
        for key, value in items.items():
            section, dot, name = key.partition(".")
            if not dot:
                if key != "seed":
                    raise ConfigError(f"未知的配置项: {key}")
                seed = value
                continue
            if section not in allowed or name not in allowed[section]:
                raise ConfigError(f"未知的配置项: {key}")
            sections[section][name] = value
        sections["model"]["seed"] = seed
        sections["train"]["seed"] = seed
        try:
            return cls(seed=seed, **sections)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(p) for p in first["loc"])
            raise ConfigError(f"配置项 {location} 不合法: {first['msg']}")

    def to_items(self) -> Dict[str, Any]:
        items: Dict[str, Any] = {"seed": self.seed}
        items.update(self.model.to_items())
        items.update(self.train.to_items())
        items.update(self.data.to_items())
        items.update(self.fi2010.to_items())
        return items

    def canonical_text(self) -> str:
        return canonical_text(self.to_items())

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()[:HASH_LENGTH]

    def with_overrides(self, overrides: Dict[str, str]) -> "RunConfig":
        items = {k: str(v) for k, v in self.to_items().items()}
        items.update(overrides)
        return RunConfig.from_items(items)

    def write(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.canonical_text())


def parse_overrides(pairs: Optional[Sequence[str]]) -> Dict[str, str]:
    """命令行 --set key=value 覆盖项"""
    overrides: Dict[str, str] = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set 需要 key=value 格式，当前为 {pair!r}")
        overrides[key.strip()] = value.strip()
    return overrides


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, str]] = None) -> RunConfig:
    """
    读取配置文件并应用覆盖项，未给出文件时从默认值开始

    Raises:
        ConfigError: 文件不存在或内容不合法
    """
    items: Dict[str, str] = {}
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f"配置文件不存在: {path}")
        try:
            with open(path, encoding="utf-8") as f:
                text = f.read()
        except UnicodeDecodeError as e:
            raise ConfigError(f"{path}: 不是合法的 UTF-8 文本: {e}")
        items = parse_flat_text(text, source=path)
    items.update(overrides or {})
    config = RunConfig.from_items(items)
    logger.debug("运行配置 %s: %s", config.config_hash(), config.to_items())
    return config
