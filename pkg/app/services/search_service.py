"""
随机超参数搜索

在离散网格上按种子随机抽样候选配置，每个候选完整训练一次（输出到
<output_dir>/candidate_<i>/），按最优验证损失升序排名并写出 search.csv。
"""
import logging
import os
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from app.core.run_config import RunConfig
from app.services.training_service import PreparedData, load_datasets, run_training
from axial.errors import ConfigError

logger = logging.getLogger(__name__)

SEARCH_CSV_NAME = "search.csv"

DEFAULT_SPACE: Dict[str, List[str]] = {
    "model.stem_channels": ["8", "16", "32"],
    "model.block_channels": ["8", "16", "32"],
    "model.heads": ["1", "2", "4"],
    "train.base_lr": ["0.003", "0.01", "0.03"],
    "train.momentum": ["0.8", "0.9", "0.95"],
}


def sample_candidates(space: Dict[str, Sequence[str]], iterations: int, seed: int) -> List[Dict[str, str]]:
    """按键排序后逐键均匀抽样；不重复抽取同一组合"""
    if iterations <= 0:
        raise ConfigError(f"iterations 必须为正整数，当前为 {iterations}")
    keys = sorted(space)
    total = int(np.prod([len(space[k]) for k in keys]))
    rng = np.random.default_rng(seed)
    seen, candidates = set(), []
    while len(candidates) < min(iterations, total):
        choice = tuple(space[k][rng.integers(len(space[k]))] for k in keys)
        if choice in seen:
            continue
        seen.add(choice)
        candidates.append(dict(zip(keys, choice)))
    return candidates


def random_search(
    run_config: RunConfig,
    iterations: int,
    seed: int,
    output_dir: str,
    space: Optional[Dict[str, Sequence[str]]] = None,
    data: Optional[PreparedData] = None,
) -> pd.DataFrame:
    """
    Args:
        run_config: 基础配置，候选只覆盖 space 中的键
        iterations: 候选数量（不超过网格大小）
        seed: 抽样种子，与训练种子无关
        output_dir: 搜索输出目录
        space: 网格，默认 DEFAULT_SPACE
        data: 已准备好的数据，未给出时按 run_config 读取

    Returns:
        按 best_val_loss 升序排列的结果表，rank 从1开始

    Raises:
        ConfigError: 网格键未知

    违反模型约束的候选（如通道数不能被头数整除）记录警告后跳过。
    """
    space = space or DEFAULT_SPACE
    unknown = sorted(set(space) - set(run_config.to_items()))
    if unknown:
        raise ConfigError(f"搜索网格包含未知配置项: {', '.join(unknown)}")
    data = data or load_datasets(run_config)
    rows = []
    for i, overrides in enumerate(sample_candidates(space, iterations, seed)):
        try:
            candidate = run_config.with_overrides(overrides)
        except ConfigError as e:
            logger.warning("候选 %d 配置不合法，跳过: %s", i, e)
            continue
        run = run_training(candidate, os.path.join(output_dir, f"candidate_{i}"), data)
        rows.append({
            "candidate": i,
            **overrides,
            "best_val_loss": run.state.best_val_loss,
            "best_epoch": run.state.best_epoch,
            "test_macro_f1": run.test_report.macro_f1 if run.test_report else float("nan"),
            "config_hash": candidate.config_hash(),
        })
        logger.info("候选 %d: best_val_loss %.5f (epoch %d)", i, run.state.best_val_loss, run.state.best_epoch)

    frame = pd.DataFrame(rows)
    if not frame.empty:
        frame = frame.sort_values(["best_val_loss", "candidate"], kind="mergesort").reset_index(drop=True)
        frame.insert(0, "rank", np.arange(1, len(frame) + 1))
    os.makedirs(output_dir, exist_ok=True)
    frame.to_csv(os.path.join(output_dir, SEARCH_CSV_NAME), index=False, encoding="utf-8", lineterminator="\n")
    return frame
