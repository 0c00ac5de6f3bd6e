import math

import numpy as np
import pytest

from eventcloud.errors import ConfigError
from eventcloud.optim import Adam, AdamState, adam_step, cosine_lr
from eventcloud.tensor import Param


def test_cosine_schedule():
    assert cosine_lr(0, 100, 1e-3) == pytest.approx(1e-3)
    assert cosine_lr(50, 100, 1e-3) == pytest.approx(5e-4)
    assert cosine_lr(100, 100, 1e-3) == pytest.approx(0.0, abs=1e-18)
    lrs = [cosine_lr(s, 100, 1.0) for s in range(101)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    with pytest.raises(ConfigError):
        cosine_lr(0, 100, 0.0)


def test_first_adam_step_is_lr_sign():
    p = Param(np.array([1.0, -2.0, 3.0]))
    p.grad = np.array([0.5, -4.0, 1e-3])
    st = AdamState([p])
    adam_step([p], st, 0.1)
    np.testing.assert_allclose(p.data, [0.9, -1.9, 2.9], atol=1e-5)
    assert st.step == 1


def test_adam_matches_reference():
    rng = np.random.default_rng(0)
    w = rng.normal(size=4)
    p = Param(w.copy(), dtype=np.float64)
    opt = Adam([p])
    m = v = np.zeros(4)
    for t in range(1, 6):
        g = rng.normal(size=4)
        p.grad = g
        opt.step(0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p.data, w, rtol=1e-12)


def test_adam_minimises_quadratic():
    p = Param(np.array([5.0, -3.0]), dtype=np.float64)
    opt = Adam([p])
    for _ in range(2000):
        p.grad = 2 * p.data
        opt.step(0.05)
    assert np.abs(p.data).max() < 1e-2


def test_adam_rejects_bad_lr():
    p = Param(np.zeros(1))
    with pytest.raises(ConfigError):
        adam_step([p], AdamState([p]), -1.0)
