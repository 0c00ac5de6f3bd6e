import numpy as np
import pytest

from eventcloud import blocks
from eventcloud import tensor as T
from eventcloud.errors import ShapeError
from eventcloud.tensor import Tensor


def test_attention_weights_normalised(rng):
    S = Tensor(rng.normal(size=(2, 5, 7, 4)) * 10)
    w = Tensor(rng.normal(size=(4, 1)))
    out, a = blocks.tag_attention(S, w, return_weights=True)
    assert out.shape == (2, 5, 4)
    np.testing.assert_allclose(a.data.sum(axis=-2), 1.0, atol=1e-6)


def test_constant_scorer_gives_mean(rng, f64):
    S = Tensor(rng.normal(size=(3, 4, 6, 5)))
    out = blocks.tag_attention(S, Tensor(np.zeros((5, 1))), Tensor(np.array([2.5])))
    np.testing.assert_allclose(out.data, S.data.mean(axis=2), atol=1e-12)


def test_max_aggregate(rng):
    S = rng.normal(size=(2, 3, 4, 5))
    np.testing.assert_array_equal(blocks.max_aggregate(Tensor(S)).data, S.max(axis=2))


def test_res_block_width_check(rng):
    block = blocks.ResBlock(4, rng, 2)
    assert block(Tensor(rng.normal(size=(3, 4)))).shape == (3, 4)
    with pytest.raises(ShapeError):
        block(Tensor(rng.normal(size=(3, 5))))


def test_local_extractor_matches_concatenated_linear(rng, f64):
    din, dout, B, T_in, Tp, K = 3, 5, 2, 7, 3, 4
    ext = blocks.LocalExtractor(din, dout, rng, 3)
    feats = rng.normal(size=(B, T_in, din))
    nbr = rng.integers(0, B * T_in, size=(B, Tp, K))
    cent = rng.integers(0, B * T_in, size=(B, Tp))
    rel = rng.normal(size=(B, Tp, K, 3))
    flat = feats.reshape(-1, din)
    group = np.concatenate([rel, flat[nbr], np.broadcast_to(flat[cent][:, :, None], (B, Tp, K, din))], -1)
    lifted = T.linear(Tensor(group), ext.lift.weight, ext.lift.bias)
    ref = ext.res(T.relu(ext.lift_bn(lifted))).data
    np.testing.assert_allclose(ext(Tensor(feats), nbr, cent, rel).data, ref, atol=1e-10)


def test_stage_output_shape(rng):
    st = blocks.Stage(3, 8, rng, res_expansion=0.5, state=4)
    feats = Tensor(rng.normal(size=(2, 10, 3)))
    nbr = rng.integers(0, 20, size=(2, 5, 4))
    cent = rng.integers(0, 20, size=(2, 5))
    out = st(feats, nbr, cent, rng.normal(size=(2, 5, 4, 3)))
    assert out.shape == (2, 5, 8)
    assert st.local.res.fc1.dout == 4


def test_batch_plan_offsets(rng):
    from eventcloud.geometry import plan_stages
    pts = [rng.random((16, 3)) for _ in range(3)]
    plans = [plan_stages(p, [8, 4, 2], 3) for p in pts]
    nbr, cent, rel = blocks.batch_plan(plans, 0, 16)
    assert nbr.shape == (3, 8, 3) and cent.shape == (3, 8) and rel.shape == (3, 8, 3, 3)
    for b in range(3):
        assert np.all(nbr[b] // 16 == b)
        np.testing.assert_array_equal(cent[b] - 16 * b, plans[b][0].centroids)
