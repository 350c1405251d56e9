import numpy as np
import pytest

from axial import ops
from axial.errors import ShapeError, TapeError, TargetIndexError
from axial.gradcheck import DEFAULT_TOLERANCE, gradcheck
from axial.model import init
from axial.model_config import ModelConfig
from axial.tensor import Parameter, Tape, Tensor, backward, default_dtype, no_grad


def _leaf(rng, shape, low=-1.0, high=1.0):
    with default_dtype(np.float64):
        return Parameter(rng.uniform(low, high, size=shape))


def _weighted(out: Tensor, rng) -> Tensor:
    """Σ out·c，c 为固定随机系数，保证梯度不是常数"""
    coeff = Tensor(rng.standard_normal(out.shape), dtype=np.float64)
    return ops.sum(ops.multiply(out, coeff))


# *** 各算子的梯度检查（float64，步长1e-4，相对误差 ≤ 1e-4）***

PRIMITIVES = {
    "add_broadcast": (((3, 4), (4,)), lambda a, b: ops.add(a, b)),
    "multiply": (((3, 4), (3, 1)), lambda a, b: ops.multiply(a, b)),
    "scale": (((5, 2),), lambda a: ops.scale(a, -2.5)),
    "matmul": (((2, 3, 4), (4, 5)), lambda a, b: ops.matmul(a, b)),
    "sum_axis": (((3, 4, 2),), lambda a: ops.sum(a, axis=(0, 2))),
    "mean_keepdims": (((3, 4),), lambda a: ops.mean(a, axis=1, keepdims=True)),
    "reshape": (((2, 6),), lambda a: ops.reshape(a, (3, 4))),
    "transpose": (((2, 3, 4),), lambda a: ops.transpose(a, (2, 0, 1))),
    "concatenate": (((2, 3), (4, 3)), lambda a, b: ops.concatenate([a, b], axis=0)),
    "gather_repeated": (((3, 5, 2),), lambda a: ops.gather(a, np.array([4, 0, 0, 2, 4]), axis=1)),
    "softmax": (((4, 6),), lambda a: ops.softmax(a, axis=-1)),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name):
    shapes, fn = PRIMITIVES[name]
    rng = np.random.default_rng(7)
    inputs = [_leaf(rng, s) for s in shapes]
    out_shape = fn(*inputs).shape
    coeff = Tensor(rng.standard_normal(out_shape), dtype=np.float64)
    result = gradcheck(lambda: ops.sum(ops.multiply(fn(*inputs), coeff)), inputs, samples=100)
    assert result.max_relative_error <= DEFAULT_TOLERANCE


def test_relu_gradient_away_from_kink():
    rng = np.random.default_rng(1)
    x = _leaf(rng, (6, 5))
    x.data[np.abs(x.data) < 0.05] = 0.5
    result = gradcheck(lambda: _weighted(ops.relu(x), np.random.default_rng(2)), [x])
    assert result.passed


def test_relu_derivative_at_zero_is_zero():
    x = Parameter(np.array([-1.0, 0.0, 2.0]))
    backward(ops.sum(ops.relu(x)))
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])


@pytest.mark.parametrize("training", [True, False])
def test_batch_norm_gradients(training):
    rng = np.random.default_rng(3)
    x = _leaf(rng, (3, 2, 2, 3))
    gamma, beta = _leaf(rng, (2,), 0.5, 1.5), _leaf(rng, (2,))
    state = ops.BNState(channels=2, dtype=np.dtype(np.float64))
    state.running_mean = np.array([0.1, -0.2])
    state.running_var = np.array([0.8, 1.3])
    coeff = Tensor(rng.standard_normal(x.shape), dtype=np.float64)

    def fn():
        frozen = ops.BNState(channels=2, dtype=np.dtype(np.float64),
                             running_mean=state.running_mean.copy(), running_var=state.running_var.copy())
        return ops.sum(ops.multiply(ops.batch_norm(x, gamma, beta, frozen, training), coeff))

    assert gradcheck(fn, [x, gamma, beta], samples=100).passed


def test_cross_entropy_gradient():
    rng = np.random.default_rng(4)
    logits = _leaf(rng, (6, 3), -3, 3)
    targets = np.array([0, 1, 2, 2, 1, 0])
    assert gradcheck(lambda: ops.cross_entropy(logits, targets), [logits]).passed


def test_tiny_model_end_to_end_gradients():
    cfg = ModelConfig(input_height=4, input_width=4, stem_channels=4, block_channels=4, heads=2, layers=1)
    rng = np.random.default_rng(5)
    with default_dtype(np.float64):
        model = init(cfg, seed=11)
        x = Tensor(rng.standard_normal((3, 1, 4, 4)))
    targets = np.array([0, 2, 1])
    params = model.parameters()
    result = gradcheck(lambda: ops.cross_entropy(model(x), targets), params, samples=150, seed=3)
    assert result.checked >= 100
    assert result.max_relative_error <= DEFAULT_TOLERANCE


def test_single_head_model_on_8x8_windows_gradients():
    cfg = ModelConfig(input_height=8, input_width=8, stem_channels=4, block_channels=4, heads=1, layers=1)
    rng = np.random.default_rng(6)
    with default_dtype(np.float64):
        model = init(cfg, seed=12)
        x = Tensor(rng.standard_normal((4, 1, 8, 8)))
    targets = np.array([0, 1, 2, 1])
    result = gradcheck(lambda: ops.cross_entropy(model(x), targets), model.parameters(), samples=150, seed=4)
    assert result.checked >= 100
    assert result.max_relative_error <= DEFAULT_TOLERANCE


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_model_gradients_finite_on_extreme_inputs(seed):
    cfg = ModelConfig(input_height=8, input_width=8, stem_channels=4, block_channels=4, heads=1, layers=2)
    rng = np.random.default_rng(seed)
    model = init(cfg, seed=seed)
    x = Tensor(rng.uniform(-1e3, 1e3, size=(6, 1, 8, 8)).astype(np.float32))
    logits = model(x)
    loss = ops.cross_entropy(logits, rng.integers(0, 3, 6))
    assert np.isfinite(logits.data).all()
    assert np.isfinite(loss.item())
    backward(loss)
    for name, param in model.named_parameters():
        assert param.grad is not None and np.isfinite(param.grad).all(), name


# *** 磁带语义 ***

def test_backward_twice_raises():
    x = Parameter(np.array([1.0, 2.0]))
    loss = ops.sum(ops.multiply(x, x))
    backward(loss)
    with pytest.raises(TapeError):
        backward(loss)


def test_backward_requires_scalar():
    x = Parameter(np.ones((2, 2)))
    with pytest.raises(TapeError):
        backward(ops.scale(x, 2.0))


def test_gradients_accumulate_across_backward_calls():
    x = Parameter(np.array([3.0]))
    backward(ops.sum(ops.scale(x, 2.0)))
    backward(ops.sum(ops.scale(x, 2.0)))
    np.testing.assert_allclose(x.grad, [4.0])


def test_no_grad_builds_no_graph():
    x = Parameter(np.ones(3))
    with no_grad():
        y = ops.sum(ops.multiply(x, x))
    assert not y.requires_grad
    with pytest.raises(TapeError):
        backward(y)


def test_eval_discards_forward_without_backward():
    model = init(ModelConfig(input_height=8, input_width=8, stem_channels=4, block_channels=4, heads=1, layers=1))
    x = Tensor(np.random.default_rng(0).standard_normal((2, 1, 8, 8)).astype(np.float32))
    loss = ops.cross_entropy(model(x), np.array([0, 1]))
    assert Tape.current().records
    model.eval()
    assert Tape.current().records == []
    with pytest.raises(TapeError):
        backward(loss)


def test_shared_subexpression_gradient():
    x = Parameter(np.array([2.0]))
    y = ops.multiply(x, x)
    loss = ops.sum(ops.add(y, y))
    backward(loss)
    np.testing.assert_allclose(x.grad, [8.0])


# *** 数值性质 ***

def test_softmax_rows_sum_to_one_on_extreme_logits():
    rng = np.random.default_rng(9)
    x = Tensor(rng.uniform(-1e3, 1e3, size=(32, 17)))
    probs = ops.softmax(x, axis=-1).data
    assert np.isfinite(probs).all()
    np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-6)


def test_cross_entropy_stable_on_large_logits():
    logits = Tensor(np.array([[1e3, -1e3, 0.0], [-1e3, -1e3, 1e3]]))
    loss = ops.cross_entropy(logits, np.array([1, 2])).item()
    assert np.isfinite(loss)
    assert loss == pytest.approx(1e3, rel=1e-3)


def test_cross_entropy_rejects_out_of_range_target():
    with pytest.raises(TargetIndexError):
        ops.cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))


def test_matmul_shape_error_mentions_shapes():
    with pytest.raises(ShapeError) as excinfo:
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    assert "(2, 3)" in str(excinfo.value) and "(4, 2)" in str(excinfo.value)


def test_batch_norm_eval_before_any_training_uses_identity_stats():
    state = ops.BNState(channels=2)
    x = Tensor(np.full((1, 2, 1, 1), 3.0, dtype=np.float32))
    gamma, beta = Tensor(np.ones(2, dtype=np.float32)), Tensor(np.zeros(2, dtype=np.float32))
    y = ops.batch_norm(x, gamma, beta, state, training=False).data
    np.testing.assert_allclose(y, 3.0 / np.sqrt(1.0 + 1e-5), rtol=1e-6)


def test_batch_norm_training_updates_running_stats():
    state = ops.BNState(channels=1, dtype=np.dtype(np.float64))
    data = np.arange(8, dtype=np.float64).reshape(2, 1, 2, 2)
    gamma, beta = Tensor(np.ones(1)), Tensor(np.zeros(1))
    ops.batch_norm(Tensor(data), gamma, beta, state, training=True)
    np.testing.assert_allclose(state.running_mean, [0.1 * data.mean()])
    np.testing.assert_allclose(state.running_var, [0.9 + 0.1 * data.var(ddof=1)])


def test_batch_norm_single_value_per_channel_rejected():
    state = ops.BNState(channels=1)
    with pytest.raises(ShapeError):
        ops.batch_norm(Tensor(np.ones((1, 1, 1, 1))), Tensor(np.ones(1)), Tensor(np.zeros(1)), state, training=True)


def test_default_precision_is_float32():
    assert Tensor([1.0, 2.0]).dtype == np.float32
    with default_dtype(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32


def test_forward_is_bit_deterministic():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((8, 16)).astype(np.float32)
    b = rng.standard_normal((16, 4)).astype(np.float32)
    first = ops.softmax(ops.matmul(Tensor(a), Tensor(b))).data
    second = ops.softmax(ops.matmul(Tensor(a), Tensor(b))).data
    assert first.tobytes() == second.tobytes()
