import numpy as np
import pytest

from eventcloud import objectives as O
from eventcloud import tensor as T
from eventcloud.errors import ContractError, ShapeError
from eventcloud.tensor import Tensor


def plain_ce(z, y):
    z = z - z.max(axis=1, keepdims=True)
    return float(np.mean(np.log(np.exp(z).sum(axis=1)) - z[np.arange(len(y)), y]))


def test_smoothed_targets():
    q = O.smoothed_targets([1], 4, 0.3)
    np.testing.assert_allclose(q, [[0.1, 0.7, 0.1, 0.1]])
    with pytest.raises(ContractError):
        O.smoothed_targets([4], 4, 0.1)


def test_eps_zero_is_plain_ce(rng, f64):
    z = rng.normal(size=(8, 5)) * 4
    y = rng.integers(0, 5, size=8)
    assert abs(O.label_smooth_ce(Tensor(z), y, 0.0).item() - plain_ce(z, y)) < 1e-12
    assert O.cross_entropy(Tensor(z), y).item() == O.label_smooth_ce(Tensor(z), y, 0.0).item()


def test_smoothing_value(f64):
    z = np.array([[2.0, 0.0, -1.0]])
    ls = z - np.log(np.exp(z).sum())
    want = -(0.9 * ls[0, 0] + 0.05 * ls[0, 1] + 0.05 * ls[0, 2])
    assert O.label_smooth_ce(Tensor(z), [0], 0.1).item() == pytest.approx(want)


def test_wmse_weights(f64):
    pred = Tensor(np.array([[1.0, 2.0], [0.0, 0.0]]))
    tgt = np.zeros((2, 2))
    assert O.wmse(pred, tgt, 2.0, 0.5).item() == pytest.approx(2.0 * 0.5 + 0.5 * 2.0)
    with pytest.raises(ShapeError):
        O.wmse(pred, np.zeros((3, 2)))


def test_cpr_loss_value(f64):
    W = Tensor(np.ones((2, 2)))
    loss = O.cpr_loss(Tensor(np.array([[3.0, 4.0, 0.0]])), Tensor(np.zeros((1, 3))),
                      np.zeros((1, 3)), np.array([[0.0, 0.0, 2.0]]), [W], 2.0, 0.5, 0.1)
    assert loss.item() == pytest.approx(2 * 5 + 0.5 * 2 + 0.1 * 4)


def test_metrics():
    assert O.accuracy(np.array([[0.1, 0.9], [0.8, 0.2]]), [1, 1]) == 0.5
    preds = np.array([[0.0, 0.0], [3.0, 4.0], [1.0, 0.0]])
    gts = np.zeros((3, 2))
    np.testing.assert_allclose(O.pixel_distances(preds, gts), [0, 5, 1])
    assert O.pixel_rate(preds, gts, 1) == pytest.approx(1 / 3)  # strictly closer
    assert O.mean_px(preds, gts) == pytest.approx(2.0)
    assert O.mse_px(preds, gts) == pytest.approx(26 / 3)
    m, deg = O.pose_error(np.ones((1, 3)), np.array([[np.pi / 2, 0, 0]]), np.zeros((1, 3)), np.zeros((1, 3)))
    assert m == pytest.approx(np.sqrt(3)) and deg == pytest.approx(90.0)
    with pytest.raises(ContractError):
        O.accuracy(np.zeros((0, 2)), [])
