"""
训练流程

- 小批量动量SGD，每步学习率 = base_lr × 余弦退火系数
- 门控参数在 gate_unfreeze_epoch 之前 trainable=False（优化器跳过，动量缓冲保持为0）
- 验证损失连续 early_stop_patience 轮不下降则提前停止
- 保存初始权重 initial.axlob 与最优验证损失检查点 best.axlob，逐轮写 metrics.jsonl
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.core.config import settings
from app.core.run_config import RunConfig
from app.models.metrics import EpochLog, MetricsReport, RunMetadata
from app.services.evaluation_service import NORM_MEAN, NORM_STD, compute_metrics, evaluate_windows
from axial import ops
from axial.checkpoint import save_checkpoint
from axial.errors import DivergenceError, EmptyInputError
from axial.model import AxialLobModel, init
from axial.optim import SGDMomentum, cosine_lr_multiplier
from axial.tensor import Tensor, backward
from axial.train_config import TrainConfig
from lob.ingest import ingest
from lob.splits import split, split_windows
from lob.windows import NormalizationStats, WindowSet, normalize

logger = logging.getLogger(__name__)

DIVERGED_CHECKPOINT_NAME = "diverged.axlob"


class EarlyStopping:
    """验证损失严格下降才算改进；连续 patience 轮未改进时 update 返回 True"""

    def __init__(self, patience: int):
        self.patience = patience
        self.best: float = math.inf
        self.best_epoch: int = -1
        self.epochs_since_improvement: int = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.epochs_since_improvement = 0
            return False
        self.epochs_since_improvement += 1
        return self.epochs_since_improvement >= self.patience


@dataclass
class TrainState:
    """
    训练状态

    属性:
        epoch: 已完成的最后一轮
        t_cur / t_total: 当前优化步数 / 预先算好的总步数
        buffers: 动量缓冲区（与参数一一对应）
        best_val_loss / best_epoch / epochs_since_improvement: 提前停止状态
        lr_trace: (步数, 余弦系数) 序列，最后一项为训练结束时的步数
        history: 每轮日志
    """
    epoch: int = -1
    t_cur: int = 0
    t_total: int = 0
    buffers: List[np.ndarray] = field(default_factory=list)
    best_val_loss: float = math.inf
    best_epoch: int = -1
    epochs_since_improvement: int = 0
    stopped_early: bool = False
    lr_trace: List[Tuple[int, float]] = field(default_factory=list)
    history: List[EpochLog] = field(default_factory=list)
    step_losses: List[float] = field(default_factory=list)


@dataclass
class PreparedData:
    """切分并归一化后的三段窗口"""
    train: WindowSet
    validation: WindowSet
    test: WindowSet
    stats: NormalizationStats

    def norm_buffers(self) -> Dict[str, np.ndarray]:
        return {NORM_MEAN: self.stats.mean, NORM_STD: self.stats.std}


def prepare_windows(train: WindowSet, validation: WindowSet, test: WindowSet, run_config: RunConfig) -> PreparedData:
    """用训练段统计量归一化三段窗口（统计量取 float32 精度，与检查点中保存的一致）"""
    stats = NormalizationStats.fit(train, run_config.data.normalization)
    stats = NormalizationStats(stats.mean.astype(np.float32).astype(np.float64),
                               stats.std.astype(np.float32).astype(np.float64))
    return PreparedData(normalize(train, stats), normalize(validation, stats), normalize(test, stats), stats)


def load_datasets(run_config: RunConfig) -> PreparedData:
    """按运行配置读取数据、切分、构造窗口并归一化"""
    data = run_config.data
    series = ingest(data.path, data.format, run_config.fi2010.feature_rows, data.keep_ranges)
    dataset_split = split(series)
    train, validation, test = split_windows(series, dataset_split, data.horizon, data.alpha,
                                            run_config.model.input_height)
    logger.info("窗口数: 训练 %d / 验证 %d / 测试 %d", len(train), len(validation), len(test))
    return prepare_windows(train, validation, test, run_config)


def steps_per_epoch(train_size: int, config: TrainConfig) -> int:
    steps = math.ceil(train_size / config.batch_size)
    if config.max_steps_per_epoch:
        steps = min(steps, config.max_steps_per_epoch)
    return steps


def _append_log(path: Optional[str], entry: EpochLog) -> None:
    if path is None:
        return
    with open(path, "a", encoding="utf-8") as f:
        f.write(entry.to_line() + "\n")


def train(
    model: AxialLobModel,
    train_set: WindowSet,
    val_set: WindowSet,
    config: TrainConfig,
    output_dir: Optional[str] = None,
    config_text: Optional[str] = None,
    extra_buffers: Optional[Dict[str, np.ndarray]] = None,
) -> TrainState:
    """
    训练模型，结束时模型恢复为验证损失最优的权重

    Args:
        model: 已初始化的模型（其当前权重即起始权重）
        train_set, val_set: 已归一化的训练/验证窗口
        config: 训练配置
        output_dir: 给出时写入 initial/best 检查点与 metrics.jsonl
        config_text: 写入检查点的运行配置规范文本
        extra_buffers: 随检查点保存的额外状态（归一化统计量）

    Raises:
        EmptyInputError: 训练或验证集为空
        DivergenceError: 损失出现 NaN/Inf，当前权重写入 diverged.axlob
    """
    if not len(train_set) or not len(val_set):
        raise EmptyInputError(f"训练集 ({len(train_set)}) 与验证集 ({len(val_set)}) 都不能为空")

    steps = steps_per_epoch(len(train_set), config)
    state = TrainState(t_total=config.epochs * steps)
    optimizer = SGDMomentum(model.parameters(), config.momentum)
    state.buffers = optimizer.buffers
    early = EarlyStopping(config.early_stop_patience)
    gates = model.gates()

    log_path = None
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
        log_path = os.path.join(output_dir, settings.METRICS_LOG_NAME)
        open(log_path, "w").close()
        save_checkpoint(model, os.path.join(output_dir, settings.INITIAL_CHECKPOINT_NAME), config_text, extra_buffers)

    best_state = model.state_dict()
    logger.info("开始训练: %d 轮 × %d 步，训练窗口 %d，验证窗口 %d", config.epochs, steps, len(train_set), len(val_set))
    for epoch in range(config.epochs):
        for gate in gates:
            gate.trainable = epoch >= config.gate_unfreeze_epoch
        model.train()
        order = np.random.default_rng([config.seed, epoch]).permutation(len(train_set))
        loss_sum, seen, lr = 0.0, 0, config.base_lr
        for i in range(steps):
            indices = order[i * config.batch_size:(i + 1) * config.batch_size]
            multiplier = cosine_lr_multiplier(state.t_cur, state.t_total)
            lr = config.base_lr * multiplier
            state.lr_trace.append((state.t_cur, multiplier))

            optimizer.zero_grad()
            logits = model(Tensor(train_set.batch(indices)))
            loss = ops.cross_entropy(logits, train_set.labels[indices])
            value = loss.item()
            if not math.isfinite(value):
                _diverged(model, output_dir, config_text, extra_buffers, epoch, state.t_cur)
            backward(loss)
            optimizer.step(lr)
            state.t_cur += 1
            state.step_losses.append(value)
            loss_sum += value * len(indices)
            seen += len(indices)

        val_loss, predictions = evaluate_windows(model, val_set)
        val_f1 = compute_metrics(predictions, val_set.labels).macro_f1
        entry = EpochLog(epoch=epoch, step=state.t_cur, lr=lr, train_loss=loss_sum / seen,
                         val_loss=val_loss, val_f1_macro=val_f1)
        state.history.append(entry)
        state.epoch = epoch
        _append_log(log_path, entry)
        logger.info("epoch %d: train_loss %.5f val_loss %.5f val_f1 %.4f lr %.6f",
                    epoch, entry.train_loss, val_loss, val_f1, lr)

        improved = val_loss < early.best
        stop = early.update(epoch, val_loss)
        if improved:
            best_state = model.state_dict()
            if output_dir:
                save_checkpoint(model, os.path.join(output_dir, settings.CHECKPOINT_NAME), config_text, extra_buffers)
        if stop:
            state.stopped_early = True
            logger.info("验证损失连续 %d 轮未下降，在第 %d 轮提前停止", config.early_stop_patience, epoch)
            break

    state.lr_trace.append((state.t_cur, cosine_lr_multiplier(state.t_cur, state.t_total)))
    state.best_val_loss = early.best
    state.best_epoch = early.best_epoch
    state.epochs_since_improvement = early.epochs_since_improvement
    model.load_state_dict(best_state)
    return state


def _diverged(model, output_dir, config_text, extra_buffers, epoch: int, step: int) -> None:
    snapshot = None
    if output_dir:
        snapshot = os.path.join(output_dir, DIVERGED_CHECKPOINT_NAME)
        save_checkpoint(model, snapshot, config_text, extra_buffers)
    logger.error("第 %d 轮第 %d 步损失发散，诊断快照: %s", epoch, step, snapshot)
    raise DivergenceError(f"第 {epoch} 轮第 {step} 步损失为 NaN/Inf", snapshot_path=snapshot)


@dataclass
class TrainingRun:
    """一次完整训练运行的结果"""
    model: AxialLobModel
    state: TrainState
    data: PreparedData
    test_report: Optional[MetricsReport]
    output_dir: str


def run_training(run_config: RunConfig, output_dir: str, data: Optional[PreparedData] = None) -> TrainingRun:
    """
    读取数据、初始化模型、训练，并用最优权重评估测试段

    输出目录包含 run_config.conf、initial/best 检查点、metrics.jsonl 和 test_metrics.json。
    """
    os.makedirs(output_dir, exist_ok=True)
    run_config.write(os.path.join(output_dir, settings.RUN_CONFIG_NAME))
    data = data or load_datasets(run_config)
    model = init(run_config.model, run_config.seed)
    config_text = run_config.canonical_text()
    state = train(model, data.train, data.validation, run_config.train, output_dir, config_text, data.norm_buffers())

    report = None
    if len(data.test):
        _, predictions = evaluate_windows(model, data.test)
        metadata = RunMetadata(seed=run_config.seed, config_hash=run_config.config_hash(),
                               checkpoint=settings.CHECKPOINT_NAME)
        report = compute_metrics(predictions, data.test.labels, data.test.horizon, metadata)
        with open(os.path.join(output_dir, "test_metrics.json"), "w", encoding="utf-8") as f:
            f.write(report.to_text())
        logger.info("测试集宏F1 %.4f", report.macro_f1)
    return TrainingRun(model, state, data, report, output_dir)
