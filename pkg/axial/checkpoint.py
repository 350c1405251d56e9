"""
检查点二进制格式（小端序）

    magic        5 字节 b"AXLOB"
    version      u32
    config_len   u32，随后为 UTF-8 规范配置文本
    count        u32
    每条记录:
        kind     u8（0 参数，1 缓冲区）
        name_len u16，随后为 UTF-8 名称
        ndim     u8，随后为 ndim 个 u32 维度
        data     float32 原始字节，行主序
"""
import io
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Dict, Mapping, Optional, Tuple

import numpy as np

from .errors import CheckpointFormatError, CheckpointMismatchError
from .model import AxialLobModel
from .model_config import ModelConfig, canonical_text, parse_flat_text

logger = logging.getLogger(__name__)

MAGIC = b"AXLOB"
FORMAT_VERSION = 1
KIND_PARAMETER = 0
KIND_BUFFER = 1


@dataclass
class CheckpointContents:
    """从文件读出的检查点内容"""
    config_text: str
    parameters: Dict[str, np.ndarray] = field(default_factory=dict)
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def config_items(self) -> Dict[str, str]:
        return parse_flat_text(self.config_text, source="checkpoint")

    def model_config(self) -> ModelConfig:
        items = self.config_items
        seed = int(items.get("seed", 0))
        return ModelConfig.from_items(items, seed=seed)


def save_checkpoint(
    model: AxialLobModel,
    path: str,
    config_text: Optional[str] = None,
    extra_buffers: Optional[Mapping[str, np.ndarray]] = None,
) -> None:
    """
    保存模型参数、BN运行统计量和配置文本

    Args:
        model: 模型
        path: 输出文件路径
        config_text: 运行配置的规范文本，默认只写入模型配置
        extra_buffers: 额外的非学习状态（如 norm.mean / norm.std）
    """
    if config_text is None:
        config_text = canonical_text({**model.config.to_items(), "seed": model.config.seed})
    records = [(KIND_PARAMETER, name, p.data) for name, p in model.named_parameters()]
    records += [(KIND_BUFFER, name, value) for name, value in model.named_buffers()]
    records += [(KIND_BUFFER, name, np.asarray(value)) for name, value in (extra_buffers or {}).items()]

    buffer = io.BytesIO()
    config_bytes = config_text.encode("utf-8")
    buffer.write(MAGIC)
    buffer.write(struct.pack("<II", FORMAT_VERSION, len(config_bytes)))
    buffer.write(config_bytes)
    buffer.write(struct.pack("<I", len(records)))
    for kind, name, array in records:
        name_bytes = name.encode("utf-8")
        array = np.ascontiguousarray(array, dtype="<f4")
        buffer.write(struct.pack("<BH", kind, len(name_bytes)))
        buffer.write(name_bytes)
        buffer.write(struct.pack("<B", array.ndim))
        buffer.write(struct.pack(f"<{array.ndim}I", *array.shape))
        buffer.write(array.tobytes())

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(buffer.getvalue())
    logger.debug("检查点已保存: %s (%d 条记录)", path, len(records))


def _read_exact(f: BinaryIO, size: int, what: str) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise CheckpointFormatError(f"检查点文件被截断：读取 {what} 时需要 {size} 字节，实际 {len(data)} 字节")
    return data


def read_checkpoint(path: str) -> CheckpointContents:
    """
    读取检查点文件

    Raises:
        CheckpointFormatError: magic 错误、版本不支持或文件被截断
    """
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointFormatError(f"不是 AXLOB 检查点文件: {path}")
        version, config_len = struct.unpack("<II", _read_exact(f, 8, "版本号"))
        if version != FORMAT_VERSION:
            raise CheckpointFormatError(f"不支持的检查点版本 {version}，当前支持 {FORMAT_VERSION}")
        try:
            config_text = _read_exact(f, config_len, "配置文本").decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointFormatError(f"配置文本不是合法的 UTF-8: {e}")
        (count,) = struct.unpack("<I", _read_exact(f, 4, "记录数"))
        contents = CheckpointContents(config_text=config_text)
        for _ in range(count):
            kind, name_len = struct.unpack("<BH", _read_exact(f, 3, "记录头"))
            try:
                name = _read_exact(f, name_len, "记录名").decode("utf-8")
            except UnicodeDecodeError as e:
                raise CheckpointFormatError(f"记录名不是合法的 UTF-8: {e}")
            (ndim,) = struct.unpack("<B", _read_exact(f, 1, "维数"))
            shape = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, f"{name} 的形状"))
            size = int(np.prod(shape, dtype=np.int64))
            raw = _read_exact(f, 4 * size, f"{name} 的数据")
            array = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
            if kind == KIND_PARAMETER:
                contents.parameters[name] = array
            elif kind == KIND_BUFFER:
                contents.buffers[name] = array
            else:
                raise CheckpointFormatError(f"记录 {name} 的类型 {kind} 未知")
        if f.read(1):
            raise CheckpointFormatError("检查点文件末尾有多余数据")
    return contents


def load_checkpoint(path: str, model: Optional[AxialLobModel] = None) -> Tuple[AxialLobModel, CheckpointContents]:
    """
    读取检查点并写入模型

    Args:
        path: 检查点路径
        model: 目标模型；为 None 时按检查点中的配置新建

    Returns:
        (模型, 检查点内容)；模型之外的缓冲区（如归一化统计量）留在 contents.buffers 中

    Raises:
        CheckpointFormatError: 文件格式错误
        CheckpointMismatchError: 参数名或形状与模型不一致，消息中带参数名
    """
    contents = read_checkpoint(path)
    if model is None:
        model = AxialLobModel(contents.model_config())

    expected = dict(model.named_parameters())
    for name, param in expected.items():
        if name not in contents.parameters:
            raise CheckpointMismatchError(f"检查点缺少参数 {name}")
        stored = contents.parameters[name]
        if stored.shape != param.shape:
            raise CheckpointMismatchError(
                f"参数 {name} 形状不一致：检查点为 {stored.shape}，模型为 {param.shape}")
    unexpected = sorted(set(contents.parameters) - set(expected))
    if unexpected:
        raise CheckpointMismatchError(f"检查点包含模型中不存在的参数 {unexpected[0]}")

    for name, param in expected.items():
        param.data = contents.parameters[name].astype(param.dtype, copy=True)
        param.grad = None
    model_buffers = dict(model.named_buffers())
    for name, value in contents.buffers.items():
        if name in model_buffers:
            if value.shape != model_buffers[name].shape:
                raise CheckpointMismatchError(
                    f"缓冲区 {name} 形状不一致：检查点为 {value.shape}，模型为 {model_buffers[name].shape}")
            model.set_buffer(name, value.astype(model_buffers[name].dtype, copy=True))
    logger.debug("检查点已加载: %s", path)
    return model, contents
