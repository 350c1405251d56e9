"""
端到端验收：默认模型配置在植入信号数据上训练

运行耗时为分钟级，默认不执行：pytest -m slow
"""
import numpy as np
import pytest

from app.core.config import settings
from app.core.run_config import RunConfig
from app.services.permutation_service import permutation_robustness
from app.services.training_service import load_datasets, run_training
from axial.model import init
from lob.ingest import write_canonical_csv
from lob.synth import SynthConfig, synth_generate

pytestmark = pytest.mark.slow

# 10000 个训练/验证/测试窗口合计
EVENTS = 10000 + 3 * 49


@pytest.fixture(scope="module")
def planted_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("planted") / "planted.csv"
    series = synth_generate(SynthConfig(events=EVENTS), seed=0)
    assert series.metadata["planted_accuracy"] >= 0.95
    write_canonical_csv(series, str(path))
    return RunConfig.from_items({"data.path": str(path), "train.epochs": "20"})


@pytest.fixture(scope="module")
def planted_runs(planted_config, tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    data = load_datasets(planted_config)
    return [run_training(planted_config, str(root / name), data) for name in ("first", "second")]


def test_default_model_learns_planted_signal(planted_runs):
    run = planted_runs[0]
    assert len(run.state.history) <= 20
    assert run.test_report.macro_f1 >= 0.90


def test_repeated_run_is_reproducible(planted_runs):
    first, second = planted_runs
    np.testing.assert_allclose(first.state.step_losses, second.state.step_losses, atol=1e-6)
    a = f"{first.output_dir}/{settings.CHECKPOINT_NAME}"
    b = f"{second.output_dir}/{settings.CHECKPOINT_NAME}"
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


def test_random_feature_permutations_barely_move_f1(planted_config):
    config = planted_config.with_overrides({"train.epochs": "10"})
    data = load_datasets(config)
    study = permutation_robustness(init(config.model, config.seed), data, config.train, trials=5, seed=0)
    assert study.trials[0].delta == 0.0
    assert len(study.trials) == 5 + 1
    assert abs(study.mean_delta) <= 3.0
