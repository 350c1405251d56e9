import numpy as np
import pytest

from axial import ops
from axial.errors import ConfigError, ShapeError
from axial.model import AxialLobModel, RunMode, init, parameter_count
from axial.model_config import ModelConfig
from axial.tensor import Tensor, no_grad

# 默认配置 16/16/2 头/2 层的可学习参数量
DEFAULT_PARAMETER_COUNT = 20527


def small_config(**overrides) -> ModelConfig:
    values = dict(input_height=8, input_width=6, stem_channels=4, block_channels=4, heads=2, layers=1)
    values.update(overrides)
    return ModelConfig(**values)


def test_default_parameter_count():
    count = parameter_count(init(ModelConfig()))
    assert count == DEFAULT_PARAMETER_COUNT
    assert 5000 <= count <= 50000


def test_parameter_count_tracks_block_width():
    assert parameter_count(init(ModelConfig(block_channels=8))) == 9327


def test_forward_shape():
    model = init(small_config(), seed=0)
    x = Tensor(np.random.default_rng(0).standard_normal((5, 1, 8, 6)).astype(np.float32))
    assert model(x).shape == (5, 3)


def test_forward_rejects_wrong_input_shape():
    model = init(small_config())
    with pytest.raises(ShapeError):
        model(Tensor(np.zeros((2, 1, 6, 8), dtype=np.float32)))


def test_init_is_deterministic_in_seed():
    a = init(small_config(), seed=3).state_dict()
    b = init(small_config(), seed=3).state_dict()
    c = init(small_config(), seed=4).state_dict()
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    assert any(a[k].tobytes() != c[k].tobytes() for k in a if k.endswith("w_q"))


def test_parameter_names_are_unique_paths():
    model = init(ModelConfig())
    names = [name for name, _ in model.named_parameters()]
    assert len(names) == len(set(names))
    assert "block.layer0.width_attn.r_q" in names
    assert "block.layer1.height_attn.g_v" in names
    assert all(p.name == name for name, p in model.named_parameters())


def test_gates_start_at_one():
    model = init(ModelConfig())
    gates = model.gates()
    assert len(gates) == 2 * 2 * 3
    assert all(g.data.tolist() == [1.0] for g in gates)


def test_eval_mode_uses_running_statistics():
    model = init(small_config(), seed=1)
    x = Tensor(np.random.default_rng(1).standard_normal((4, 1, 8, 6)).astype(np.float32))
    with no_grad():
        single = model(Tensor(x.data[:1]), mode=RunMode.EVAL).data
        batched = model(x, mode=RunMode.EVAL).data
    assert not model.training
    np.testing.assert_allclose(single, batched[:1], atol=1e-5)


def test_train_mode_updates_batch_norm_buffers():
    model = init(small_config(), seed=2)
    before = dict(model.named_buffers())["stem.bn.running_mean"].copy()
    x = Tensor(np.random.default_rng(2).standard_normal((4, 1, 8, 6)).astype(np.float32) + 3)
    with no_grad():
        model(x, mode=RunMode.TRAIN)
    after = dict(model.named_buffers())["stem.bn.running_mean"]
    assert not np.array_equal(before, after)


def test_heads_must_divide_block_channels():
    with pytest.raises(ConfigError):
        ModelConfig(block_channels=16, heads=3)


def test_model_config_items_round_trip_through_text():
    cfg = ModelConfig(heads=4, layers=3)
    items = {k: str(v) for k, v in cfg.to_items().items()}
    assert ModelConfig.from_items(items, seed=0) == cfg


def test_model_config_from_items_rejects_unknown_key():
    with pytest.raises(ConfigError):
        ModelConfig.from_items({"model.depth": "3"})


def test_state_dict_restores_weights():
    model = AxialLobModel(small_config(), seed=5)
    saved = model.state_dict()
    for p in model.parameters():
        p.data = p.data + 1
    model.load_state_dict(saved)
    assert all(np.array_equal(v, model.state_dict()[k]) for k, v in saved.items())


def _batch(seed, n=4, shape=(8, 6)):
    return Tensor(np.random.default_rng(seed).standard_normal((n, 1) + shape).astype(np.float32))


def test_block_reduces_to_residual_path_without_attention_output():
    model = init(small_config(layers=2), seed=6)
    with no_grad():
        model(_batch(6, n=8), mode=RunMode.TRAIN)
    model.eval()
    for i in range(model.block.depth):
        layer = getattr(model.block, f"layer{i}")
        for attn in (layer.width_attn, layer.height_attn):
            attn.w_o.data[...] = 0.0
            for gate in attn.gates():
                gate.data[...] = 0.0

    x = _batch(7)
    with no_grad():
        h = model.stem(x)
        for i in range(model.block.depth):
            layer = getattr(model.block, f"layer{i}")
            silent = Tensor(np.zeros((h.shape[0], layer.conv_in.channels_out) + h.shape[2:], dtype=np.float32))
            expected = ops.relu(ops.add(h, layer.bn_out(layer.conv_out(silent)))).data
            actual = layer(h).data
            np.testing.assert_allclose(actual, expected, atol=1e-6)
            h = Tensor(actual)


def test_fresh_block_without_attention_output_is_identity():
    model = init(small_config(layers=2), seed=8).eval()
    for attn in (m for i in range(2) for m in (getattr(model.block, f"layer{i}").width_attn,
                                               getattr(model.block, f"layer{i}").height_attn)):
        attn.w_o.data[...] = 0.0
    x = _batch(8)
    with no_grad():
        logits = model(x).data
        direct = model.head(ops.mean(model.stem(x), axis=(2, 3))).data
    np.testing.assert_allclose(logits, direct, atol=1e-6)


def test_eval_forward_commutes_with_batch_order():
    model = init(small_config(), seed=9).eval()
    x = _batch(9, n=6)
    order = np.random.default_rng(9).permutation(6)
    with no_grad():
        logits = model(x).data
        shuffled = model(Tensor(x.data[order])).data
    np.testing.assert_allclose(shuffled, logits[order], atol=1e-5)


@pytest.mark.parametrize("mode", [RunMode.TRAIN, RunMode.EVAL])
def test_all_zero_input_gives_finite_logits(mode):
    model = init(small_config(), seed=10)
    with no_grad():
        logits = model(Tensor(np.zeros((3, 1, 8, 6), dtype=np.float32)), mode=mode).data
    assert logits.shape == (3, 3)
    assert np.isfinite(logits).all()


def test_eval_forward_is_pure():
    model = init(small_config(), seed=11)
    with no_grad():
        model(_batch(11, n=8), mode=RunMode.TRAIN)
    model.eval()
    buffers = {k: v.copy() for k, v in model.named_buffers()}
    x = _batch(12)
    with no_grad():
        first = model(x).data
        second = model(x).data
    assert first.tobytes() == second.tobytes()
    for name, value in model.named_buffers():
        assert value.tobytes() == buffers[name].tobytes(), name
