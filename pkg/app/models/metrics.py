import json
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

# #################################################################
# #################### 评估指标模型 ##################################
# #################################################################

CLASS_NAMES = ("down", "stationary", "up")


class ConfusionMatrix(BaseModel):
    """3x3 混淆矩阵，行为真实类别，列为预测类别"""
    counts: List[List[int]]

    @field_validator("counts")
    @classmethod
    def _check_counts(cls, value: List[List[int]]) -> List[List[int]]:
        size = len(value)
        if any(len(row) != size for row in value):
            raise ValueError("混淆矩阵必须是方阵")
        if any(c < 0 for row in value for c in row):
            raise ValueError("混淆矩阵计数不能为负数")
        return value

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)


class ClassMetrics(BaseModel):
    """单个类别的精确率/召回率/F1"""
    precision: float = Field(ge=0.0, le=1.0)
    recall: float = Field(ge=0.0, le=1.0)
    f1: float = Field(ge=0.0, le=1.0)
    support: int = Field(ge=0)


class RunMetadata(BaseModel):
    """报告所属运行的信息"""
    seed: Optional[int] = None
    config_hash: Optional[str] = None
    permutation_id: Optional[int] = None
    checkpoint: Optional[str] = None


class MetricsReport(BaseModel):
    """
    分类评估报告

    macro_* 为各类别指标的算术平均；zero_division 列出分母为0、按0计的指标
    （如 "up.precision"）。
    """
    per_class: Dict[str, ClassMetrics]
    macro_precision: float = Field(ge=0.0, le=1.0)
    macro_recall: float = Field(ge=0.0, le=1.0)
    macro_f1: float = Field(ge=0.0, le=1.0)
    accuracy: float = Field(ge=0.0, le=1.0)
    confusion_matrix: ConfusionMatrix
    total: int
    horizon: Optional[int] = None
    zero_division: List[str] = Field(default_factory=list)
    metadata: RunMetadata = Field(default_factory=RunMetadata)

    def to_text(self) -> str:
        """规范文本形式：键排序的 JSON，便于 diff"""
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


class EpochLog(BaseModel):
    """每轮训练日志，逐行写入 metrics.jsonl"""
    epoch: int
    step: int
    lr: float
    train_loss: float
    val_loss: float
    val_f1_macro: float

    def to_line(self) -> str:
        return json.dumps(self.model_dump(), sort_keys=True)


class PermutationTrial(BaseModel):
    trial: int
    permutation_seed: int
    f1_base: float
    f1_perm: float
    delta: float


class PermutationStudy(BaseModel):
    """输入置换实验结果，delta 以F1百分点计"""
    horizon: int
    trials: List[PermutationTrial]
    mean_delta: float
    std_delta: float


class RunSummary(BaseModel):
    """多次独立运行的宏平均指标均值与标准差"""
    runs: int
    mean: Dict[str, float]
    std: Dict[str, float]
