import pytest

from app.core.run_config import RunConfig
from app.services.training_service import load_datasets
from lob.ingest import write_canonical_csv
from lob.synth import SynthConfig, synth_generate

# 小模型 + 少量步数，保证整套测试在CPU上几秒内完成
TINY_ITEMS = {
    "model.stem_channels": "4",
    "model.block_channels": "4",
    "model.heads": "2",
    "train.batch_size": "16",
    "train.epochs": "3",
    "train.max_steps_per_epoch": "4",
    "train.gate_unfreeze_epoch": "1",
    "train.early_stop_patience": "10",
}


@pytest.fixture(scope="session")
def synth_csv(tmp_path_factory):
    """1200个事件的合成订单簿（无交易日标注，按事件 70/30 切分）"""
    path = tmp_path_factory.mktemp("data") / "synth.csv"
    write_canonical_csv(synth_generate(SynthConfig(events=1200), seed=0), str(path))
    return str(path)


@pytest.fixture
def tiny_config(synth_csv):
    return RunConfig.from_items({**TINY_ITEMS, "data.path": synth_csv})


@pytest.fixture(scope="session")
def prepared_data(synth_csv):
    return load_datasets(RunConfig.from_items({**TINY_ITEMS, "data.path": synth_csv}))
