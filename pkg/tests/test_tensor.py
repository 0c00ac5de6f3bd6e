import numpy as np
import pytest

from eventcloud import tensor as T
from eventcloud.errors import ContractError, DegenerateBatchError, ShapeError
from eventcloud.tensor import Param, Tape, Tensor

from gradcases import BLOCKS, OPS


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name, f64):
    for seed in range(3):
        fn, inputs = OPS[name](seed)
        assert T.gradcheck(fn, inputs) < 1e-6, (name, seed)


@pytest.mark.parametrize("name", sorted(BLOCKS))
def test_block_gradients(name, f64):
    fn, inputs = BLOCKS[name](0)
    assert T.gradcheck(fn, inputs) < 1e-3


def test_default_dtype_is_float32():
    assert Tensor([1.0, 2.0]).dtype == np.float32
    with T.precision(np.float64):
        assert Tensor([1, 2]).dtype == np.float64
    assert T.get_default_dtype() == np.float32


def test_no_recording_outside_tape():
    p = Param(np.ones(3))
    out = T.mul(p, 2.0)
    assert not out.requires_grad
    with Tape() as tape:
        T.mul(p, 2.0)
    assert len(tape) == 1


def test_backward_overwrites_and_zeroes_unreachable():
    a, b = Param(np.array([1.0, 2.0])), Param(np.array([3.0]))
    for _ in range(2):
        with Tape() as tape:
            loss = T.sum(T.square(a))
        T.backward(tape, loss, [a, b])
        np.testing.assert_allclose(a.grad, [2.0, 4.0])
    np.testing.assert_array_equal(b.grad, [0.0])


def test_replay_is_deterministic():
    rng = np.random.default_rng(0)
    W = Param(rng.normal(size=(4, 3)))
    x = rng.normal(size=(5, 4))
    with Tape() as tape:
        loss = T.sum(T.relu(T.linear(x, W)))
    T.backward(tape, loss, [W])
    g1 = W.grad.copy()
    T.backward(tape, loss, [W])
    np.testing.assert_array_equal(g1, W.grad)


def test_non_scalar_loss_rejected():
    a = Param(np.ones(3))
    with Tape() as tape:
        out = T.mul(a, 2.0)
    with pytest.raises(ContractError):
        T.backward(tape, out)


def test_shared_input_accumulates():
    a = Param(np.array([3.0]))
    with Tape() as tape:
        loss = T.sum(T.add(T.mul(a, a), a))
    T.backward(tape, loss)
    np.testing.assert_allclose(a.grad, [7.0])


def test_softmax_rows_sum_to_one(rng):
    x = Tensor(rng.normal(size=(4, 7)) * 50)
    np.testing.assert_allclose(T.softmax(x).data.sum(axis=-1), 1.0, atol=1e-6)
    np.testing.assert_allclose(np.exp(T.log_softmax(x).data).sum(axis=-1), 1.0, atol=1e-5)


def test_max_gradient_goes_to_first_argmax():
    a = Param(np.array([[1.0, 3.0, 3.0]]))
    with Tape() as tape:
        loss = T.sum(T.max(a, axis=-1))
    T.backward(tape, loss)
    np.testing.assert_array_equal(a.grad, [[0.0, 1.0, 0.0]])


def test_norm_subgradient_at_zero():
    a = Param(np.zeros((1, 3)))
    with Tape() as tape:
        loss = T.sum(T.norm(a))
    T.backward(tape, loss)
    np.testing.assert_array_equal(a.grad, np.zeros((1, 3)))


def test_linear_shape_mismatch():
    with pytest.raises(ShapeError):
        T.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_batch_norm_train_statistics(rng):
    x = Tensor(rng.normal(3.0, 2.0, size=(64, 5)))
    rm, rv = np.zeros(5, np.float32), np.ones(5, np.float32)
    out = T.batch_norm(x, Tensor(np.ones(5)), Tensor(np.zeros(5)), rm, rv, True)
    np.testing.assert_allclose(out.data.mean(axis=0), 0.0, atol=1e-5)
    np.testing.assert_allclose(out.data.std(axis=0), 1.0, atol=1e-3)
    np.testing.assert_allclose(rm, 0.1 * x.data.mean(axis=0), rtol=1e-5)
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.data.var(axis=0, ddof=1), rtol=1e-5)


def test_batch_norm_eval_uses_buffers():
    x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    rm, rv = np.array([1.0, 1.0], np.float32), np.array([4.0, 4.0], np.float32)
    out = T.batch_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), rm, rv, False, eps=0.0)
    np.testing.assert_allclose(out.data, (x.data - 1.0) / 2.0, rtol=1e-6)


def test_batch_norm_single_row_rejected():
    with pytest.raises(DegenerateBatchError):
        T.batch_norm(Tensor(np.ones((1, 3))), Tensor(np.ones(3)), Tensor(np.zeros(3)),
                     np.zeros(3), np.ones(3), True)


def test_conv_is_causal(rng):
    x = rng.normal(size=(1, 8, 2))
    w = Tensor(rng.normal(size=(2, 3)))
    y0 = T.conv1d_causal(Tensor(x), w).data
    x2 = x.copy()
    x2[:, 5:] += 1.0
    y1 = T.conv1d_causal(Tensor(x2), w).data
    np.testing.assert_array_equal(y0[:, :5], y1[:, :5])
    assert not np.allclose(y0[:, 5:], y1[:, 5:])


def test_take_rows_backward_accumulates_repeats():
    a = Param(np.zeros((3, 2)))
    with Tape() as tape:
        loss = T.sum(T.take_rows(a, np.array([[0, 0], [2, 0]])))
    T.backward(tape, loss)
    np.testing.assert_array_equal(a.grad, [[3, 3], [0, 0], [1, 1]])
