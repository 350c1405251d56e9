"""
订单簿数据导入导出

- canonical-csv: 表头 ts,pa1,va1,pb1,vb1,...,pa10,va10,pb10,vb10，可选末列 day
- fi2010-matrix: 空白分隔的数值矩阵，每列一个事件，40个原始特征所在的行号由配置给出
- 标签导出: anchor_t,k,label，标签取 -1/0/1
"""
import logging
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from axial.errors import BookValidationError, DataError

from .book import FEATURE_COUNT, LobEventSeries, feature_names, validate_book
from .labeling import Direction
from .windows import WindowSet

logger = logging.getLogger(__name__)

TIMESTAMP_COLUMN = "ts"
DAY_COLUMN = "day"
LABEL_COLUMNS = ["anchor_t", "k", "label"]
# FI-2010 数据文件中原始LOB特征的默认行号（前40行）
DEFAULT_FI2010_ROWS = tuple(range(FEATURE_COUNT))


class IngestFormat(Enum):
    """输入文件格式"""
    CANONICAL_CSV = "canonical-csv"
    FI2010_MATRIX = "fi2010-matrix"


def _keep_mask(length: int, keep_ranges: Optional[Sequence[Tuple[int, int]]]) -> np.ndarray:
    """由 [start, stop) 事件区间列表构造保留掩码（正常交易时段限制）"""
    if not keep_ranges:
        return np.ones(length, dtype=bool)
    mask = np.zeros(length, dtype=bool)
    for start, stop in keep_ranges:
        if start < 0 or stop < start:
            raise DataError(f"事件区间 [{start}, {stop}) 不合法")
        mask[start:stop] = True
    return mask


def _to_float(frame: pd.DataFrame, first_line: int) -> np.ndarray:
    """逐列精确转换为浮点数，失败时报告文件行号"""
    try:
        return frame.to_numpy(dtype=np.float64)
    except ValueError:
        pass
    for row, values in enumerate(frame.itertuples(index=False)):
        for name, value in zip(frame.columns, values):
            try:
                float(value)
            except (TypeError, ValueError):
                raise DataError(f"第 {row + first_line} 行列 {name} 的值 {value!r} 不是数值")
    raise DataError("数据中包含无法解析的数值")


def read_canonical_csv(path: str, keep_ranges: Optional[Sequence[Tuple[int, int]]] = None) -> LobEventSeries:
    """
    读取规范CSV

    Raises:
        DataError: 表头不符或某行格式错误（带行号）
        BookValidationError: 订单簿不合法（带事件下标）
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.ParserError as e:
        raise DataError(f"{path}: 行格式错误: {e}")
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: 文件为空")
    except UnicodeDecodeError as e:
        raise DataError(f"{path}: 不是合法的 UTF-8 文本: {e}")

    expected = [TIMESTAMP_COLUMN] + feature_names()
    columns = list(frame.columns)
    has_day = columns == expected + [DAY_COLUMN]
    if columns != expected and not has_day:
        raise DataError(f"{path}: 表头应为 {','.join(expected)}[,{DAY_COLUMN}]")

    # 第1行为表头，数据从第2行开始
    values = _to_float(frame, first_line=2)
    timestamps, book = values[:, 0], values[:, 1:1 + FEATURE_COUNT]
    try:
        validate_book(book)
    except BookValidationError as e:
        raise BookValidationError(f"{path}: {e}（第 {e.event_index + 2} 行）", event_index=e.event_index)
    days = values[:, -1].astype(np.int64) if has_day else None

    series = LobEventSeries(timestamps, book, days, {"source": str(path)})
    mask = _keep_mask(len(series), keep_ranges)
    if not mask.all():
        series = series.subset(mask)
    logger.info("读取 %s: %d 个事件", path, len(series))
    return series


def read_fi2010_matrix(
    path: str,
    feature_rows: Sequence[int] = DEFAULT_FI2010_ROWS,
    keep_ranges: Optional[Sequence[Tuple[int, int]]] = None,
) -> LobEventSeries:
    """
    读取 FI-2010 风格的矩阵文件（行为特征，列为事件）

    Args:
        feature_rows: 40个原始特征按 [pa_i, va_i, pb_i, vb_i] 顺序所在的行号（从0开始）
    """
    rows = list(feature_rows)
    if len(rows) != FEATURE_COUNT:
        raise DataError(f"fi2010.feature_rows 需要 {FEATURE_COUNT} 个行号，当前为 {len(rows)} 个")
    try:
        matrix = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise DataError(f"{path}: 矩阵格式错误: {e}")
    if max(rows) >= matrix.shape[0] or min(rows) < 0:
        raise DataError(f"{path}: 只有 {matrix.shape[0]} 行，无法读取第 {max(rows)} 行")
    book = matrix[rows].T
    validate_book(book)
    series = LobEventSeries(np.arange(book.shape[0], dtype=np.float64), book, None, {"source": str(path)})
    mask = _keep_mask(len(series), keep_ranges)
    if not mask.all():
        series = series.subset(mask)
    logger.info("读取 %s: %d 个事件", path, len(series))
    return series


def ingest(
    path: str,
    fmt: IngestFormat = IngestFormat.CANONICAL_CSV,
    feature_rows: Sequence[int] = DEFAULT_FI2010_ROWS,
    keep_ranges: Optional[Sequence[Tuple[int, int]]] = None,
) -> LobEventSeries:
    fmt = IngestFormat(fmt)
    if fmt is IngestFormat.FI2010_MATRIX:
        return read_fi2010_matrix(path, feature_rows, keep_ranges)
    return read_canonical_csv(path, keep_ranges)


def write_canonical_csv(series: LobEventSeries, path: str) -> None:
    """导出规范CSV（浮点数按最短可回读表示写出，读回后逐位一致）"""
    frame = pd.DataFrame(series.book, columns=feature_names())
    frame.insert(0, TIMESTAMP_COLUMN, series.timestamps)
    if series.days is not None:
        frame[DAY_COLUMN] = series.days
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")


def write_labels(windows: WindowSet, path: str) -> None:
    """导出标签 CSV: anchor_t,k,label（-1/0/1）"""
    frame = pd.DataFrame({
        "anchor_t": windows.anchors + windows.offset,
        "k": np.full(len(windows), windows.horizon, dtype=np.int64),
        "label": [Direction.from_class_index(c).value for c in windows.labels],
    }, columns=LABEL_COLUMNS)
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")


def read_labels(path: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=np.int64, encoding="utf-8")
    except (ValueError, pd.errors.ParserError) as e:
        raise DataError(f"{path}: 标签文件格式错误: {e}")
    if list(frame.columns) != LABEL_COLUMNS:
        raise DataError(f"{path}: 表头应为 {','.join(LABEL_COLUMNS)}")
    return frame
