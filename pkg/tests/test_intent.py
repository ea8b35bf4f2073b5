import numpy as np
import pytest

from modeswitch import intent, trajectories as tr
from modeswitch.intent import AccuracyCurve, ClassifierConfig

TINY = ClassifierConfig(filters=8, dense=(8,), max_epochs=4, patience=2, batch_size=16)


def test_oracle_extremes(rng):
    perfect = AccuracyCurve.constant(0.0)
    hopeless = AccuracyCurve.constant(1.0)
    for _ in range(200):
        lab = int(rng.integers(4))
        assert intent.oracle_predict(lab, 0.5, perfect, rng).argmax == lab
        assert intent.oracle_predict(lab, 0.5, hopeless, rng).argmax != lab


def test_oracle_error_frequency():
    rng = np.random.default_rng(11)
    curve = AccuracyCurve.constant(0.1)
    wrong = sum(intent.oracle_predict(2, 0.3, curve, rng).argmax != 2 for _ in range(100_000))
    assert abs(wrong / 100_000 - 0.1) < 0.01


def test_oracle_probabilities_are_distributions(rng):
    for _ in range(500):
        p = intent.oracle_probabilities(1, rng.random(), rng.random(), rng.random(), rng.random() * 1e-9, 4)
        assert p.sum() == pytest.approx(1.0)
        assert np.argmax(p) == np.flatnonzero(p == p.max())[0]
        assert np.sum(p == p.max()) == 1


def test_curve_interpolation_and_round_trip(tmp_path):
    c = AccuracyCurve([0.2, 0.6, 1.0], [0.6, 0.1, 0.0])
    assert c(0.4) == pytest.approx(0.35)
    assert c(0.0) == pytest.approx(0.6)
    assert AccuracyCurve.from_dict(c.to_dict()) == c
    c.to_csv(tmp_path / "c.csv", ["seed: 0"])
    assert AccuracyCurve.from_csv(tmp_path / "c.csv") == c
    with pytest.raises(ValueError):
        AccuracyCurve([0.5, 0.4], [0.1, 0.2])
    with pytest.raises(ValueError):
        AccuracyCurve([0.5], [1.5])


def test_default_fraction_grid():
    assert intent.default_fraction_grid() == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]


def test_classifier_deterministic(small_ds, tmp_path):
    a = intent.train_classifier(small_ds, TINY, seed=1)
    b = intent.train_classifier(small_ds, TINY, seed=1)
    a.save(tmp_path / "a.ckpt")
    b.save(tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    back = intent.Classifier.load(tmp_path / "a.ckpt")
    w = tr.window(small_ds.split("test")[0], 0.7)
    assert np.array_equal(intent.predict_intention(a, w).probabilities, intent.predict_intention(back, w).probabilities)


def test_predict_intention_properties(small_ds):
    clf = intent.train_classifier(small_ds, TINY, seed=0)
    w = tr.window(small_ds.split("test")[0], 0.5)
    est = intent.predict_intention(clf, w)
    assert est.probabilities.sum() == pytest.approx(1.0)
    again = intent.predict_intention(clf, w)
    assert np.array_equal(est.probabilities, again.probabilities)
    with pytest.raises(ValueError):
        intent.predict_intention(clf, tr.ObservationWindow(np.zeros((0, 5)), 0, np.zeros((3, 5)), 0.0, 3))


def test_separable_two_class():
    ds = tr.generate_dataset(20, noise_scale=0.0, seed=2, n_classes=2)
    cfg = ClassifierConfig(filters=16, dense=(16,), max_epochs=50, patience=50, batch_size=16,
                           val_fractions=(0.6, 0.8, 1.0))
    clf = intent.train_classifier(ds, cfg, seed=0)
    assert max(acc for _, _, acc in clf.log) == 1.0
    curve = intent.accuracy_curve(clf, ds.split("test"), [1.0])
    assert curve.errors[0] == 0.0


def test_needs_two_classes(small_ds):
    ds = tr.Dataset(small_ds.trajectories[:5], np.arange(3), np.array([3]), np.array([4]), 0)
    with pytest.raises(ValueError):
        intent.train_classifier(ds, TINY)
