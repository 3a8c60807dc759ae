import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxanon.classifier import (Dataset, Forest, ForestConfig, Metrics, average_metrics,
                                best_split_on_feature, condition_matrix, encode_labels, evaluate,
                                harmonic_mean, metrics_from_predictions, predict, train_forest)
from voxanon.errors import FormatError, ProtocolError, ShapeError, TrainingError


def separable(n=80, p=2, seed=0, shift=3.0):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    X = rng.standard_normal((n, p))
    X[:, 0] += shift * y
    return Dataset(X, y)


def xor_set():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] * 5)
    y = np.array([0, 1, 1, 0] * 5)
    return Dataset(X, y)


# data set

def test_labels_encoding():
    assert list(encode_labels(["healthy", "pathological", 1, False])) == [0, 1, 1, 0]
    with pytest.raises(ValueError):
        encode_labels(["sick"])
    with pytest.raises(ValueError):
        encode_labels([2])


def test_dataset_validation():
    with pytest.raises(ShapeError):
        Dataset(np.zeros(3), [0, 1, 0])
    with pytest.raises(ShapeError):
        Dataset(np.zeros((3, 2)), [0, 1])
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan, 0.0]]), [0])
    d = Dataset(np.zeros((2, 3)), [0, 1])
    assert d.feature_names == ("f0", "f1", "f2")


# splits

def test_split_gain_perfect():
    x = np.array([1.0, 2.0, 3.0, 10.0, 11.0, 12.0])
    y = np.array([0, 0, 0, 1, 1, 1])
    gain, thr = best_split_on_feature(x, y, "entropy")
    assert gain == pytest.approx(1.0)
    assert thr == 6.5
    gain, _ = best_split_on_feature(x, y, "gini")
    assert gain == pytest.approx(0.5)


def test_split_constant_feature():
    assert best_split_on_feature(np.ones(5), np.array([0, 1, 0, 1, 0]), "entropy") == (0.0, None)


def test_split_hand_computed_entropy():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    y = np.array([0, 0, 1, 1])
    gain, thr = best_split_on_feature(x, y, "entropy")
    assert (gain, thr) == (pytest.approx(1.0), 1.5)
    # best split isolates the first row: left {0}, right {1, 0, 1}
    y = np.array([0, 1, 0, 1])
    gain, thr = best_split_on_feature(x, y, "entropy")
    h = lambda p: 0.0 if p in (0, 1) else -(p * np.log2(p) + (1 - p) * np.log2(1 - p))  # noqa: E731
    assert gain == pytest.approx(1.0 - 0.75 * h(1 / 3))
    assert thr == 0.5


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_split_gain_non_negative(seed):
    rng = np.random.default_rng(seed)
    x = np.round(rng.standard_normal(30), 1)
    y = rng.integers(0, 2, 30)
    for crit in ("entropy", "gini"):
        gain, thr = best_split_on_feature(x, y, crit)
        assert gain >= -1e-12
        if thr is not None:
            assert x.min() <= thr < x.max()


# training

def test_separable_train_accuracy():
    rng = np.random.default_rng(0)
    y = np.repeat([0, 1], 40)
    X = rng.standard_normal((80, 2))
    X[:, 0] = rng.uniform(0, 1, 80) + 2 * y  # margin of 1 on feature 0
    d = Dataset(X, y)
    f = train_forest(d, ForestConfig(20, 10, seed=1))
    assert evaluate(f, d).accuracy == 1.0


def test_forest_deterministic():
    d = separable(p=6)
    cfg = ForestConfig(15, 8, seed=4)
    assert train_forest(d, cfg).to_text() == train_forest(d, cfg).to_text()
    assert train_forest(d, cfg).to_text() != train_forest(d, ForestConfig(15, 8, seed=5)).to_text()


def test_forest_workers_identical():
    d = separable(p=6)
    cfg = ForestConfig(12, 8, seed=2)
    assert train_forest(d, cfg, workers=3).to_text() == train_forest(d, cfg).to_text()


def test_forest_row_permutation_invariant():
    d = separable(p=5, seed=3)
    perm = np.random.default_rng(9).permutation(len(d))
    shuffled = Dataset(d.rows[perm], d.labels[perm])
    cfg = ForestConfig(10, 6, seed=0)
    assert train_forest(d, cfg).to_text() == train_forest(shuffled, cfg).to_text()


def test_forest_permutation_invariant_with_ids():
    d = separable(p=3, seed=1)
    ids = [f"r{i:03d}" for i in range(len(d))]
    perm = np.random.default_rng(2).permutation(len(d))
    a = Dataset(d.rows, d.labels, ids=ids)
    b = Dataset(d.rows[perm], d.labels[perm], ids=[ids[i] for i in perm])
    cfg = ForestConfig(8, 6, seed=0)
    assert train_forest(a, cfg).to_text() == train_forest(b, cfg).to_text()


def test_xor_stump_limited():
    d = xor_set()
    f = train_forest(d, ForestConfig(1, 1, features_per_split="all", bootstrap=False))
    assert evaluate(f, d).accuracy <= 0.75


def test_xor_solved_with_depth():
    d = xor_set()
    # pure xor gives zero first-split gain; a lopsided copy breaks the tie
    X = np.vstack([d.rows, [[0.0, 0.0]] * 3])
    y = np.concatenate([d.labels, [0, 0, 0]])
    f = train_forest(Dataset(X, y), ForestConfig(1, 3, features_per_split="all", bootstrap=False))
    assert evaluate(f, Dataset(X, y)).accuracy == 1.0


@given(st.integers(1, 6), st.integers(0, 50))
@settings(max_examples=20, deadline=None)
def test_depth_bound(max_depth, seed):
    d = separable(n=60, p=4, seed=seed, shift=0.5)
    f = train_forest(d, ForestConfig(3, max_depth, seed=seed))
    assert all(t.depth() <= max_depth for t in f.trees)


def test_positive_gain_at_internal_nodes():
    f = train_forest(separable(p=4, shift=1.0), ForestConfig(5, 10, seed=0))
    for t in f.trees:
        for feat, gain in zip(t.feature, t.gain):
            if feat >= 0:
                assert gain > 0


def test_single_class_rejected():
    with pytest.raises(TrainingError):
        train_forest(Dataset(np.zeros((4, 2)), [0, 0, 0, 0]))


def test_config_validation():
    with pytest.raises(ValueError):
        ForestConfig(0)
    with pytest.raises(ValueError):
        ForestConfig(criterion="mse")
    with pytest.raises(ValueError):
        ForestConfig(features_per_split="half")
    assert ForestConfig().n_candidates(234) == 15
    assert ForestConfig(features_per_split="log2").n_candidates(103) == 6


# prediction and serialization

def test_predict_shape_error():
    f = train_forest(separable(), ForestConfig(5, 5))
    with pytest.raises(ShapeError):
        predict(f, np.zeros(3))
    with pytest.raises(ShapeError):
        predict(f, np.zeros((1, 2)))


def test_predict_unanimous_probability():
    f = train_forest(separable(shift=10.0), ForestConfig(9, 5, seed=0))
    assert predict(f, np.array([-20.0, 0.0])) == (0, 0.0)
    assert predict(f, np.array([30.0, 0.0])) == (1, 1.0)


def test_serialization_roundtrip(tmp_path):
    d = separable(p=4)
    f = train_forest(d, ForestConfig(6, 6, criterion="gini", features_per_split=2, seed=3))
    f.save(tmp_path / "m.txt")
    g = Forest.load(tmp_path / "m.txt")
    assert g.to_text() == f.to_text()
    assert g.config == f.config
    assert np.array_equal(g.predict_proba(d.rows), f.predict_proba(d.rows))


def test_serialization_rejects_garbage():
    with pytest.raises(FormatError):
        Forest.from_text("something else 3\n")
    text = train_forest(separable(), ForestConfig(2, 3)).to_text()
    with pytest.raises(FormatError):
        Forest.from_text(text.replace("end\n", ""))


# metrics

def test_metrics_hand_counts():
    # TP 3, FP 1, FN 2, TN 4
    y_true = [1, 1, 1, 0, 1, 1, 0, 0, 0, 0]
    y_pred = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0]
    m = metrics_from_predictions(y_true, y_pred)
    assert (m.tp, m.fp, m.fn, m.tn) == (3, 1, 2, 4)
    pc = m.percent()
    assert pc["precision"] == pytest.approx(75.0)
    assert pc["recall"] == pytest.approx(60.0)
    assert pc["f1"] == pytest.approx(200 / 3)
    assert pc["accuracy"] == pytest.approx(70.0)


def test_metrics_all_positive():
    m = metrics_from_predictions([1, 1, 0, 0], [1, 1, 1, 1]).percent()
    assert m["recall"] == 100.0
    assert m["precision"] == 50.0
    assert m["f1"] == pytest.approx(200 / 3)


def test_metrics_perfect_and_empty():
    m = metrics_from_predictions([0, 1, 1], [0, 1, 1])
    assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ProtocolError):
        metrics_from_predictions([], [])


def test_metrics_no_positive_predictions():
    m = metrics_from_predictions([0, 1], [0, 0])
    assert (m.precision, m.recall, m.f1) == (0.0, 0.0, 0.0)


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60))
@settings(max_examples=100, deadline=None)
def test_f1_is_harmonic_mean(pairs):
    y_true, y_pred = zip(*pairs)
    m = metrics_from_predictions(y_true, y_pred)
    assert abs(m.f1 - harmonic_mean(m.precision, m.recall)) < 1e-9
    assert min(m.precision, m.recall) - 1e-12 <= m.f1 <= max(m.precision, m.recall) + 1e-12


def test_average_metrics():
    a = Metrics(0.8, 1.0, 0.5, harmonic_mean(1.0, 0.5))
    b = Metrics(0.6, 0.5, 0.5, 0.5)
    avg = average_metrics([a, b])
    assert (avg.accuracy, avg.precision, avg.recall) == (pytest.approx(0.7), 0.75, 0.5)
    assert avg.f1 == pytest.approx(harmonic_mean(0.75, 0.5))


def test_evaluate_empty():
    f = train_forest(separable(), ForestConfig(2, 3))
    with pytest.raises(ProtocolError):
        evaluate(f, Dataset(np.zeros((0, 2)), []))


# condition grid

def test_condition_matrix_single_cell():
    tr, te = separable(seed=0), separable(seed=1)
    r = condition_matrix({"original": tr}, {"original": te}, ForestConfig(10, 6))
    assert list(r.cells) == [("original", "features")]
    assert r.averages["original"].accuracy == r.cells[("original", "features")].accuracy


def test_condition_matrix_identical_conditions(tmp_path):
    tr, te = separable(p=3, seed=0), separable(p=3, seed=1)
    fams = {"a": tr, "b": tr}
    tests = {"a": te, "b": te}
    r = condition_matrix({"x": fams, "y": fams}, {"x": tests, "y": tests}, ForestConfig(8, 6))
    assert r.cells[("x", "a")] == r.cells[("y", "a")]
    assert r.averages["x"] == r.averages["y"]


def test_condition_matrix_four_by_four(tmp_path):
    conds = ["original", "mcadams", "vtln", "mel_gl"]
    fams = ["articulation", "prosody", "phonation", "phonology"]
    train = {c: {f: separable(40, 3, seed=i * 4 + j) for j, f in enumerate(fams)}
             for i, c in enumerate(conds)}
    test = {c: {f: separable(20, 3, seed=100 + i * 4 + j) for j, f in enumerate(fams)}
            for i, c in enumerate(conds)}
    r = condition_matrix(train, test, ForestConfig(5, 5))
    assert len(r.cells) == 16
    assert r.conditions() == conds and r.families() == fams
    assert len(r.accuracy_table().splitlines()) == 2 + 4
    assert len(r.average_table().splitlines()) == 2 + 4
    r.write_csv(tmp_path / "grid.csv")
    assert len((tmp_path / "grid.csv").read_text().splitlines()) == 1 + 16 + 4


def test_condition_matrix_mismatch():
    d = separable()
    with pytest.raises(ProtocolError):
        condition_matrix({"a": d}, {"b": d}, ForestConfig(2, 2))
    with pytest.raises(ProtocolError):
        condition_matrix({"a": {"x": d}}, {"a": {"y": d}}, ForestConfig(2, 2))
