import numpy as np
import pytest

from cfisac.classifier import (
    FEED_FORWARD,
    NEAREST_CENTROID,
    ClassifierModel,
    FingerprintDataset,
    NoiseConfig,
    build_dataset,
    confusion_report,
    evaluate,
    fit,
    make_synthetic,
    predict,
    stratified_split,
    train,
)
from cfisac.fingerprint import FingerprintLibrary, sample_profile
from cfisac.scenario import DOWNLINK, UPLINK, ScenarioConfig, generate_scenario

from conftest import make_scenario


def _scenario(seed=0, n_downlink=5):
    return generate_scenario(ScenarioConfig(n_rru=n_downlink + 3, n_downlink=n_downlink), seed)


def _separable(seed=0, n=100):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0, 0], [10, 0, 0], [0, 10, 0]])
    X = np.concatenate([c + rng.uniform(-1, 1, (n, 3)) for c in centers])
    y = np.repeat([4, 7, 9], n)
    tr, te = stratified_split(y, seed)
    return FingerprintDataset(X, y, np.zeros_like(y), np.zeros_like(y), np.zeros(len(y)), tr, te, seed)


def test_split_disjoint_exhaustive_stratified():
    y = np.repeat([1, 2, 3], [50, 100, 30])
    tr, te = stratified_split(y, 0)
    assert not set(tr) & set(te)
    assert sorted(np.concatenate([tr, te])) == list(range(len(y)))
    for lab, n in [(1, 50), (2, 100), (3, 30)]:
        assert np.sum(y[te] == lab) == round(0.2 * n)


@pytest.mark.parametrize("kind", [NEAREST_CENTROID, FEED_FORWARD])
def test_separable_perfect(kind):
    ds = _separable()
    model = train(ds, kind, {"epochs": 100}, seed=0)
    report = evaluate(model, ds)
    assert report.accuracy == 1.0
    assert np.array_equal(report.confusion, np.diag(np.diag(report.confusion)))
    assert set(model.predict(ds.features)) <= {4, 7, 9}


def test_centroid_sample_predicts_its_label():
    ds = _separable()
    model = train(ds)
    centroid = model.params["centroids"][1] * model.scale + model.mean
    assert predict(model, centroid) == 7
    with pytest.raises(ValueError):
        predict(model, np.zeros(4))


def test_train_errors():
    with pytest.raises(ValueError):
        fit(np.zeros((5, 2)), np.ones(5))
    with pytest.raises(ValueError):
        fit(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        fit(np.zeros((4, 2)), [0, 0, 1, 1], kind="cnn")


def test_training_deterministic_and_blind_to_test_split():
    ds = _separable(seed=3)
    rng = np.random.default_rng(0)
    X = ds.features.copy()
    X[ds.test_idx] = X[rng.permutation(ds.test_idx)] + rng.normal(0, 5, (len(ds.test_idx), 3))
    tampered = FingerprintDataset(X, ds.labels, ds.sinks, ds.path_index, ds.snr_db, ds.train_idx, ds.test_idx, 3)
    for kind in (NEAREST_CENTROID, FEED_FORWARD):
        a = train(ds, kind, {"epochs": 20}, seed=1)
        b = train(tampered, kind, {"epochs": 20}, seed=1)
        assert a.to_json() == b.to_json()


def test_model_json_round_trip():
    ds = _separable()
    for kind in (NEAREST_CENTROID, FEED_FORWARD):
        model = train(ds, kind, {"epochs": 10})
        back = ClassifierModel.from_json(model.to_json())
        assert np.array_equal(back.predict(ds.features), model.predict(ds.features))


def test_synthetic_perfect_and_calibrated():
    perfect = make_synthetic(1.0, [0, 1, 2])
    truth = np.random.default_rng(0).integers(0, 3, 1000)
    assert np.array_equal(perfect.predict_many(truth), truth)
    clf = make_synthetic(0.9, range(5), seed=1)
    truth = np.random.default_rng(1).integers(0, 5, 100_000)
    acc = np.mean(clf.predict_many(truth) == truth)
    assert 0.897 <= acc <= 0.903


def test_synthetic_confusion_uniform_over_wrong_labels():
    clf = make_synthetic(0.95, range(5), seed=2)
    truth = np.repeat(np.arange(5), 20_000)
    report = confusion_report(truth, clf.predict_many(truth), clf.labels)
    rows = report.confusion / report.confusion.sum(axis=1, keepdims=True)
    off = rows[~np.eye(5, dtype=bool)]
    assert np.all(np.abs(off - 0.05 / 4) < 0.004)
    assert np.array_equal(report.confusion.sum(axis=1), np.full(5, 20_000))


def test_synthetic_shared_draws_nested():
    labels = (0, 1, 2, 3)
    clf_lo, clf_hi = make_synthetic(0.9, labels), make_synthetic(0.98, labels)
    truth = np.random.default_rng(0).integers(0, 4, 5000)
    draws = clf_lo.draws(len(truth), np.random.default_rng(5))
    right_lo = clf_lo.decide(truth, draws) == truth
    right_hi = clf_hi.decide(truth, draws) == truth
    assert np.all(right_hi[right_lo])


def test_synthetic_invariants():
    with pytest.raises(ValueError):
        make_synthetic(1.2, [0, 1])
    with pytest.raises(ValueError):
        make_synthetic(0.9, [0])


def test_evaluate_rejects_empty_test_split():
    ds = _separable().with_split(np.arange(300), np.array([], dtype=int))
    with pytest.raises(ValueError):
        evaluate(train(ds), ds)


def test_dataset_size_and_metadata():
    sc = _scenario(0)
    ds = build_dataset(sc, 60, 64, 0.4, seed=1)
    assert len(ds) == 5 * 60
    assert ds.features.shape == (300, 8)
    assert all(np.sum(ds.labels == d) == 60 for d in sc.downlink_ids)
    assert set(ds.sinks) <= set(sc.uplink_ids)
    assert set(ds.path_index) <= {r.id for r in sc.mobile_reflectors}
    assert len(ds.test_idx) == 5 * 12
    back = FingerprintDataset.from_json(ds.to_json())
    assert np.array_equal(back.features, ds.features) and np.array_equal(back.test_idx, ds.test_idx)


def test_dataset_deterministic():
    sc = _scenario(2)
    a = build_dataset(sc, 30, 64, 0.3, seed=4)
    b = build_dataset(sc, 30, 64, 0.3, seed=4)
    assert a.to_json() == b.to_json()


def test_dataset_preconditions():
    one = make_scenario([((0, 0, 20), DOWNLINK), ((400, 0, 20), UPLINK)], [((200, 100, 5), (3, 0, 0), 0.3)])
    with pytest.raises(ValueError):
        build_dataset(one, 10, 32, 0.4)
    static_only = make_scenario([((0, 0, 20), DOWNLINK), ((300, 0, 20), DOWNLINK), ((150, 300, 20), UPLINK)],
                                [((200, 100, 5), (0, 0, 0), 0.3)])
    with pytest.raises(ValueError):
        build_dataset(static_only, 10, 32, 0.4)


def test_identical_profiles_give_chance():
    sc = make_scenario([((0, 0, 20), DOWNLINK), ((600, 0, 20), DOWNLINK), ((300, 400, 20), UPLINK)],
                       [((200, 200, 5), (4, 1, 0), 0.3), ((400, 150, 8), (-2, 3, 0), 0.3)])
    prof = sample_profile(0, 0.4, 1)
    twin = FingerprintLibrary({0: prof, 1: prof}, 0.4)
    ds = build_dataset(sc, 1000, 256, 0.4, seed=0, library=twin)
    acc = evaluate(train(ds), ds).accuracy
    assert abs(acc - 0.5) < 0.06


def test_accuracy_increases_with_scale():
    accs = {s: [] for s in (0.1, 0.2, 0.3, 0.4)}
    for seed in range(5):
        sc = _scenario(seed)
        for scale in accs:
            ds = build_dataset(sc, 200, 256, scale, NoiseConfig(), seed=seed)
            accs[scale].append(evaluate(train(ds), ds).accuracy)
    means = [np.mean(v) for v in accs.values()]
    assert all(a <= b for a, b in zip(means, means[1:]))


def test_report_table_and_dict():
    rep = confusion_report([1, 1, 2, 2], [1, 2, 2, 2], (1, 2))
    assert rep.accuracy == 0.75
    d = rep.to_dict()
    assert d["per_label_accuracy"] == {"1": 0.5, "2": 1.0}
    assert "accuracy 0.7500 over 4 test samples" in rep.table()
    with pytest.raises(ValueError):
        confusion_report([], [])
