"""
输入置换稳健性实验

所有试验都从同一组起始权重出发重新训练：基线用原始特征顺序，每个试验对
训练/验证/测试窗口施加同一个随机特征置换。随机置换试验之前额外有一行恒等
置换，用来验证整条流程的确定性（ΔF1 必须为0）；均值与标准差只在随机置换
试验上统计。
"""
import logging
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from app.models.metrics import PermutationStudy, PermutationTrial
from app.services.evaluation_service import compute_metrics, evaluate_windows
from app.services.training_service import PreparedData, train
from axial.model import AxialLobModel
from axial.train_config import TrainConfig
from lob.windows import FEATURE_COUNT, permute_features, random_permutation

logger = logging.getLogger(__name__)

IDENTITY_SEED = -1
CSV_COLUMNS = ["trial", "permutation_seed", "f1_base", "f1_perm", "delta"]


def _train_and_score(model: AxialLobModel, start: Dict[str, np.ndarray], data: PreparedData,
                     permutation: np.ndarray, config: TrainConfig) -> float:
    model.load_state_dict(start)
    train_set, val_set, test_set = (permute_features(w, permutation) for w in (data.train, data.validation, data.test))
    train(model, train_set, val_set, config)
    _, predictions = evaluate_windows(model, test_set)
    return compute_metrics(predictions, test_set.labels).macro_f1


def permutation_robustness(
    model: AxialLobModel,
    data: PreparedData,
    config: TrainConfig,
    trials: int = 5,
    seed: int = 0,
    include_identity: bool = True,
) -> PermutationStudy:
    """
    Args:
        model: 起始权重所在的模型（通常由 initial.axlob 加载）
        data: 已归一化的三段窗口
        config: 每次重新训练使用的训练配置
        trials: 随机置换试验个数，不含恒等置换行
        seed: 第 t 个随机置换 (t 从0开始) 的种子为 seed + t
        include_identity: 在随机置换之前额外加一行恒等置换

    Returns:
        PermutationStudy，delta 与均值/标准差均以F1百分点计
    """
    start = model.state_dict()
    identity = np.arange(FEATURE_COUNT)
    f1_base = _train_and_score(model, start, data, identity, config)
    logger.info("基线测试宏F1 %.4f", f1_base)

    plan = [(identity, IDENTITY_SEED)] if include_identity else []
    plan += [(random_permutation(seed + t), seed + t) for t in range(trials)]

    rows: List[PermutationTrial] = []
    for trial, (permutation, perm_seed) in enumerate(plan):
        f1_perm = _train_and_score(model, start, data, permutation, config)
        delta = (f1_perm - f1_base) * 100
        rows.append(PermutationTrial(trial=trial, permutation_seed=perm_seed,
                                     f1_base=f1_base, f1_perm=f1_perm, delta=delta))
        logger.info("试验 %d (置换种子 %d): 宏F1 %.4f，ΔF1 %+.2f 点", trial, perm_seed, f1_perm, delta)

    model.load_state_dict(start)
    random_deltas = np.array([r.delta for r in rows if r.permutation_seed != IDENTITY_SEED])
    summary = random_deltas if random_deltas.size else np.array([r.delta for r in rows])
    return PermutationStudy(
        horizon=data.test.horizon,
        trials=rows,
        mean_delta=float(summary.mean()) if summary.size else 0.0,
        std_delta=float(summary.std()) if summary.size else 0.0,
    )


def study_frame(study: PermutationStudy) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in study.trials], columns=CSV_COLUMNS)


def write_study_csv(study: PermutationStudy, path: str, summary_path: Optional[str] = None) -> None:
    """trial,permutation_seed,f1_base,f1_perm,delta；均值±标准差另写一行摘要文件"""
    study_frame(study).to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    if summary_path:
        random_trials = sum(1 for t in study.trials if t.permutation_seed != IDENTITY_SEED)
        pd.DataFrame([{"horizon": study.horizon, "trials": random_trials,
                       "mean_delta": study.mean_delta, "std_delta": study.std_delta}]).to_csv(
            summary_path, index=False, encoding="utf-8", lineterminator="\n")
