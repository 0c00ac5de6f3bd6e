import numpy as np

from eventcloud import synth
from eventcloud.events import load_events, read_manifest


def test_classification_split_layout(tmp_path):
    synth.synth_classification(str(tmp_path), seed=1, n_train=6, n_test=3, n_signal=200)
    train = read_manifest(str(tmp_path / "train" / "manifest.txt"))
    assert [l for _, l in train] == [[0.0], [1.0], [2.0]] * 2
    s = load_events(train[0][0])
    assert (s.width, s.height) == (128, 128)
    assert np.all(np.diff(s.t.astype(np.int64)) >= 0)
    assert len(read_manifest(str(tmp_path / "test" / "manifest.txt"))) == 3


def test_classification_is_reproducible(tmp_path):
    for d in ("a", "b"):
        synth.synth_classification(str(tmp_path / d), seed=4, n_train=3, n_test=3, n_signal=100)
    for split in ("train", "test"):
        for i in range(3):
            a = load_events(str(tmp_path / "a" / split / f"w{i:06d}.evt"))
            b = load_events(str(tmp_path / "b" / split / f"w{i:06d}.evt"))
            assert a.equals(b)


def test_orbit_classes_share_footprint():
    rng = np.random.default_rng(0)
    h1 = synth.xy_histogram([synth.class_window(1, rng) for _ in range(150)])
    h2 = synth.xy_histogram([synth.class_window(2, rng) for _ in range(150)])
    h0 = synth.xy_histogram([synth.class_window(0, rng) for _ in range(150)])
    assert synth.bhattacharyya(h1, h2) > 0.97
    assert synth.bhattacharyya(h0, h1) < synth.bhattacharyya(h1, h2)


def test_orbit_classes_differ_in_time():
    prm = {"cx": 64.0, "cy": 64.0, "r": 20.0, "phase": 0.0, "dir": 1.0}
    s = np.linspace(0, 0.999, 50)
    x1, _ = synth.emitter_path(1, prm, s)
    x2, _ = synth.emitter_path(2, prm, s)
    assert not np.allclose(x1, x2)
    # the swing returns to its start, the orbit keeps going
    assert abs(synth.emitter_path(2, prm, 0.999)[0] - 84.0) < 0.1


def test_eye_labels_follow_rim_centre(tmp_path):
    synth.synth_eye(str(tmp_path), seed=0, n_train=8, n_test=4, windows_per_recording=5)
    entries = read_manifest(str(tmp_path / "train" / "manifest.txt"))
    assert len(entries) == 8
    for path, (cx, cy) in entries:
        s = load_events(path)
        assert (s.width, s.height) == (240, 180)
        assert 0 <= cx < 240 and 0 <= cy < 180
        # the median event sits close to the dot centre
        assert abs(np.median(s.x.astype(float)) - cx) < 6
        assert abs(np.median(s.y.astype(float)) - cy) < 6


def test_sweep_moves_right():
    prm = synth.class_params(np.random.default_rng(3))
    x, y = synth.emitter_path(0, prm, np.linspace(0, 0.999, 100))
    assert np.all(np.diff(x) > 0) and np.all(y == y[0])


def test_stationary_dot_label():
    rng = np.random.default_rng(0)
    out = synth.eye_windows(rng, 3, path=lambda t: (np.full(np.shape(t), 100.0), np.full(np.shape(t), 50.0)))
    for _, label in out:
        assert label == [100.0, 50.0]


def test_events_per_eye_window():
    rng = np.random.default_rng(1)
    counts = [len(s) for s, _ in synth.eye_windows(rng, 20)]
    expected = 400 * synth.EYE_WINDOW_US / 1000 * 1.03
    assert 0.9 * expected < np.mean(counts) < 1.1 * expected
