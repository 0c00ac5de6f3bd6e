import os

import numpy as np
import pytest

from eventcloud import cli, synth
from eventcloud import tensor as T
from eventcloud.bench import bench_latency
from eventcloud.config import parse_config
from eventcloud.data import load_dataset, sample_window
from eventcloud.errors import ConfigError, ContractError
from eventcloud.events import load_events, make_stream, write_events
from eventcloud.model import EventModel, count_params, read_checkpoint
from eventcloud.nn import BatchNorm
from eventcloud.train import batches, eval_checkpoint, freeze_batch_norm, train_loop

SMALL = """task = classify
n_points = 64
centroids = 32,16,8
dims = 8,8,16
k = 4
classes = 3
head_hidden = 16
ssm_state = 4
batch_size = 8
epochs = 2
lr = 0.003
"""


@pytest.fixture(scope="module")
def tiny_data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    synth.synth_classification(str(d), seed=0, n_train=18, n_test=9, n_signal=150)
    return str(d)


def test_batches_merge_singleton():
    out = batches(17, 8, np.random.default_rng(0))
    assert [len(b) for b in out] == [8, 9]
    assert [len(b) for b in batches(9, 8, np.random.default_rng(0))] == [9]
    assert sorted(np.concatenate(out)) == list(range(17))


def test_train_writes_artifacts(tiny_data, tmp_path):
    cfg = parse_config(SMALL)
    res = train_loop(cfg, tiny_data, str(tmp_path), log=lambda s: None)
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,eval_metric,lr,seconds"
    assert len(lines) == 3
    assert os.path.exists(tmp_path / "best.ckpt") and os.path.exists(tmp_path / "last.ckpt")
    assert 0 <= res["best"]["accuracy"] <= 1
    ev = eval_checkpoint(cfg, str(tmp_path / "best.ckpt"), tiny_data)
    assert ev["accuracy"] == pytest.approx(res["best"]["accuracy"])


def test_training_is_deterministic(tiny_data, tmp_path):
    cfg = parse_config(SMALL + "epochs = 1\n")
    for d in ("a", "b"):
        train_loop(cfg, tiny_data, str(tmp_path / d), log=lambda s: None)
    assert (tmp_path / "a" / "last.ckpt").read_bytes() == (tmp_path / "b" / "last.ckpt").read_bytes()
    rows = [[l.split(",")[:4] for l in (tmp_path / d / "metrics.csv").read_text().splitlines()]
            for d in ("a", "b")]
    assert rows[0] == rows[1]


def test_frozen_batch_norm_keeps_stats_and_learns(tiny_data):
    cfg = parse_config(SMALL)
    train_ds, _ = load_dataset(tiny_data, cfg.model.n_points)
    model = EventModel(cfg.model).train()
    freeze_batch_norm(model)
    norms = [m for m in model.modules() if isinstance(m, BatchNorm)]
    assert norms and not any(m.training for m in norms)
    assert model.training
    before = {k: v.copy() for k, v in model.named_buffers()}
    idx = np.arange(4)
    with T.Tape() as tape:
        loss = T.sum(model(train_ds.coords[idx], train_ds.plans(model, idx)))
    T.backward(tape, loss, model.params())
    assert all(np.array_equal(v, before[k]) for k, v in model.named_buffers())
    assert any(np.abs(m.gamma.grad).sum() > 0 for m in norms)
    # one row is fine once the statistics are frozen
    model(train_ds.coords[:1], train_ds.plans(model, [0]))


def test_resample_redraws_subsets(tiny_data):
    train_ds, _ = load_dataset(tiny_data, 64)
    first = train_ds.coords.copy()
    model = EventModel(parse_config(SMALL).model)
    train_ds.plans(model, [0])
    train_ds.resample([0, 2])
    assert not np.array_equal(first, train_ds.coords)
    assert train_ds._plans == {}
    again, _ = load_dataset(tiny_data, 64)
    again.resample([0, 2])
    assert np.array_equal(again.coords, train_ds.coords)
    again.resample([0, 3])
    assert not np.array_equal(again.coords, train_ds.coords)


def test_freeze_option_validated():
    with pytest.raises(ConfigError):
        parse_config(SMALL + "freeze_bn_after = -1\n").validate()
    cfg = parse_config(SMALL + "freeze_bn_after = 1\n")
    assert cfg.freeze_bn_after == 1


def test_resample_and_freeze_stay_deterministic(tiny_data, tmp_path):
    cfg = parse_config(SMALL + "epochs = 3\nresample = true\nfreeze_bn_after = 1\n")
    for d in ("a", "b"):
        train_loop(cfg, tiny_data, str(tmp_path / d), log=lambda s: None)
    assert (tmp_path / "a" / "last.ckpt").read_bytes() == (tmp_path / "b" / "last.ckpt").read_bytes()


def test_label_range_checked(tiny_data, tmp_path):
    cfg = parse_config(SMALL.replace("classes = 3", "classes = 2"))
    with pytest.raises(ContractError):
        train_loop(cfg, tiny_data, str(tmp_path), log=lambda s: None)


def test_permute_time_keeps_footprint(tiny_data):
    s = load_events(os.path.join(tiny_data, "train", "w000001.evt"))
    a = sample_window(s, 64, 3)
    b = sample_window(s, 64, 3, permute_time=True)
    assert sorted(map(tuple, a.coords[:, :2])) == sorted(map(tuple, b.coords[:, :2]))
    assert sorted(a.coords[:, 2]) == sorted(b.coords[:, 2])
    assert np.all(np.diff(b.coords[:, 2]) >= 0)


def test_dataset_loading_is_seeded(tiny_data):
    a, _ = load_dataset(tiny_data, 64, seed=0)
    b, _ = load_dataset(tiny_data, 64, seed=0)
    c, _ = load_dataset(tiny_data, 64, seed=1)
    assert a.coords.tobytes() == b.coords.tobytes()
    assert a.coords.tobytes() != c.coords.tobytes()


def test_bench_percentiles():
    cfg = parse_config(SMALL).model
    r = bench_latency(cfg, iters=20)
    assert r["p5"] <= r["p50"] <= r["p95"] and r["iters"] == 20
    with pytest.raises(ContractError):
        bench_latency(cfg, iters=5)


def test_cli_end_to_end(tmp_path, capsys):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(SMALL + "epochs = 1\n")
    data, out = str(tmp_path / "d"), str(tmp_path / "o")
    assert cli.main(["synth", "--out", data, "--train", "9", "--test", "6"]) == 0
    assert cli.main(["train", "--config", str(cfg_path), "--data", data, "--out", out]) == 0
    assert cli.main(["eval", "--config", str(cfg_path), "--data", data,
                     "--checkpoint", os.path.join(out, "best.ckpt")]) == 0
    assert "accuracy" in capsys.readouterr().out
    assert cli.main(["count", "--config", str(cfg_path)]) == 0
    assert f"params {count_params(parse_config(SMALL).model)}" in capsys.readouterr().out
    assert cli.main(["bench", "--config", str(cfg_path), "--iters", "20"]) == 0
    assert "P50" in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense_key = 1\n")
    assert cli.main(["count", "--config", str(bad)]) == 1
    assert "unknown key" in capsys.readouterr().err
    with pytest.raises(SystemExit) as e:
        cli.main(["train", "--bogus"])
    assert e.value.code == 2


def test_prep_cuts_windows(tmp_path):
    rng = np.random.default_rng(0)
    src = tmp_path / "raw" / "train"
    src.mkdir(parents=True)
    n = 2000
    s = make_stream(np.sort(rng.integers(0, 2_000_000, n)), rng.integers(0, 128, n),
                    rng.integers(0, 128, n), rng.integers(0, 2, n), 128, 128)
    write_events(s, str(src / "rec0.evt"))
    (src / "recordings.txt").write_text("rec0.evt,2\n")
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(SMALL)
    out = tmp_path / "prepped"
    assert cli.main(["prep", "--config", str(cfg_path), "--data", str(tmp_path / "raw"),
                     "--out", str(out)]) == 0
    # 2 s recording, 0.5 s windows every 0.25 s
    assert counts_line(out) == 8
    ds_lines = (out / "train" / "manifest.txt").read_text().splitlines()
    assert all(line.endswith(",2") for line in ds_lines)


def counts_line(out):
    return len((out / "train" / "manifest.txt").read_text().splitlines())


def test_checkpoint_digest_matches_config(tiny_data, tmp_path):
    cfg = parse_config(SMALL + "epochs = 1\n")
    train_loop(cfg, tiny_data, str(tmp_path), log=lambda s: None)
    _, digest, _ = read_checkpoint(str(tmp_path / "last.ckpt"))
    assert digest == cfg.model.digest()
