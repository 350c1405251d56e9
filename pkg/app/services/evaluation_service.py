import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.models.metrics import CLASS_NAMES, ClassMetrics, ConfusionMatrix, MetricsReport, RunMetadata, RunSummary
from axial import ops
from axial.checkpoint import load_checkpoint
from axial.errors import DataError, EmptyInputError
from axial.model import AxialLobModel
from axial.tensor import Tensor, no_grad
from lob.windows import NormalizationStats, WindowSet, normalize

logger = logging.getLogger(__name__)

NORM_MEAN = "norm.mean"
NORM_STD = "norm.std"


def confusion_matrix(predictions: Sequence[int], labels: Sequence[int], classes: int = 3) -> np.ndarray:
    """行为真实类别、列为预测类别的计数矩阵"""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    return np.bincount(labels * classes + predictions, minlength=classes * classes).reshape(classes, classes)


def _ratio(numerator: int, denominator: int) -> Tuple[float, bool]:
    if denominator == 0:
        return 0.0, True
    return numerator / denominator, False


def compute_metrics(
    predictions: Sequence[int],
    labels: Sequence[int],
    horizon: Optional[int] = None,
    metadata: Optional[RunMetadata] = None,
) -> MetricsReport:
    """
    计算各类别与宏平均的精确率/召回率/F1

    分母为0的指标按0计，并记入 report.zero_division。

    Raises:
        EmptyInputError: 输入为空
        DataError: 预测与标签长度不一致
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise DataError(f"预测数量 {predictions.size} 与标签数量 {labels.size} 不一致")
    if predictions.size == 0:
        raise EmptyInputError("没有可评估的样本")

    matrix = confusion_matrix(predictions, labels, len(CLASS_NAMES))
    per_class = {}
    flags = []
    for c, name in enumerate(CLASS_NAMES):
        tp = int(matrix[c, c])
        precision, p_zero = _ratio(tp, int(matrix[:, c].sum()))
        recall, r_zero = _ratio(tp, int(matrix[c, :].sum()))
        f1, f_zero = (0.0, True) if precision + recall == 0 else (2 * precision * recall / (precision + recall), False)
        flags += [f"{name}.{metric}" for metric, hit in (("precision", p_zero), ("recall", r_zero), ("f1", f_zero)) if hit]
        per_class[name] = ClassMetrics(precision=precision, recall=recall, f1=f1, support=int(matrix[c, :].sum()))
    if flags:
        logger.warning("以下指标分母为0，按0计: %s", ", ".join(flags))

    count = len(CLASS_NAMES)
    return MetricsReport(
        per_class=per_class,
        macro_precision=sum(m.precision for m in per_class.values()) / count,
        macro_recall=sum(m.recall for m in per_class.values()) / count,
        macro_f1=sum(m.f1 for m in per_class.values()) / count,
        accuracy=float(np.trace(matrix)) / predictions.size,
        confusion_matrix=ConfusionMatrix(counts=matrix.tolist()),
        total=int(predictions.size),
        horizon=horizon,
        zero_division=flags,
        metadata=metadata or RunMetadata(),
    )


def predict(model: AxialLobModel, windows: WindowSet, batch_size: Optional[int] = None) -> np.ndarray:
    """评估模式下批量前向，返回 (n, classes) logits"""
    batch_size = batch_size or settings.EVAL_BATCH_SIZE
    model.eval()
    outputs = []
    with no_grad():
        for start in range(0, len(windows), batch_size):
            indices = np.arange(start, min(start + batch_size, len(windows)))
            outputs.append(model(Tensor(windows.batch(indices))).data)
    if not outputs:
        return np.zeros((0, model.config.classes), dtype=np.float32)
    return np.concatenate(outputs, axis=0)


def evaluate_windows(model: AxialLobModel, windows: WindowSet, batch_size: Optional[int] = None) -> Tuple[float, np.ndarray]:
    """
    返回 (平均交叉熵, 预测类别)

    Raises:
        EmptyInputError: 窗口集合为空
    """
    if not len(windows):
        raise EmptyInputError("窗口集合为空")
    logits = predict(model, windows, batch_size)
    with no_grad():
        loss = ops.cross_entropy(Tensor(logits), windows.labels).item()
    return loss, logits.argmax(axis=1)


def checkpoint_normalization(buffers: dict) -> Optional[NormalizationStats]:
    if NORM_MEAN in buffers and NORM_STD in buffers:
        return NormalizationStats(buffers[NORM_MEAN].astype(np.float64), buffers[NORM_STD].astype(np.float64))
    return None


def evaluate_checkpoint(
    checkpoint_path: str,
    windows: WindowSet,
    metadata: Optional[RunMetadata] = None,
    batch_size: Optional[int] = None,
) -> MetricsReport:
    """
    加载检查点并在原始（未归一化）窗口上评估；检查点中保存的归一化统计量会先作用于窗口

    Raises:
        EmptyInputError: 窗口集合为空
        CheckpointMismatchError: 检查点与配置不一致
    """
    if not len(windows):
        raise EmptyInputError("窗口集合为空")
    model, contents = load_checkpoint(checkpoint_path)
    stats = checkpoint_normalization(contents.buffers)
    if stats is not None:
        windows = normalize(windows, stats)
    logits = predict(model, windows, batch_size)
    meta = metadata or RunMetadata()
    if meta.checkpoint is None:
        meta = meta.model_copy(update={"checkpoint": str(checkpoint_path)})
    report = compute_metrics(logits.argmax(axis=1), windows.labels, windows.horizon, meta)
    logger.info("评估 %s: %d 个窗口，宏F1 %.4f", checkpoint_path, report.total, report.macro_f1)
    return report


def summarize_runs(reports: Sequence[MetricsReport]) -> RunSummary:
    """多次独立运行的宏平均指标均值与总体标准差"""
    if not reports:
        raise EmptyInputError("没有可汇总的报告")
    keys = ("macro_precision", "macro_recall", "macro_f1", "accuracy")
    values = {k: np.array([getattr(r, k) for r in reports]) for k in keys}
    return RunSummary(
        runs=len(reports),
        mean={k: float(v.mean()) for k, v in values.items()},
        std={k: float(v.std()) for k, v in values.items()},
    )
