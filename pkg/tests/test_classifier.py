import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cs_mbdct import classifier as C
from cs_mbdct.codebook import FeatureVector

BACKENDS = ["numba", "numpy"]


def naive_chi2(a, b, eps=1e-10):
    total = 0.0
    for x, y in zip(a, b):
        if x + y != 0:
            total += (x - y) ** 2 / (x + y + eps)
    return 0.5 * total


def naive_knn(train, labels, query, k):
    d = [(naive_chi2(query, t), i) for i, t in enumerate(train)]
    d.sort()  # distance, then training index
    top = d[:k]
    votes, sums = {}, {}
    for dist, i in top:
        votes[labels[i]] = votes.get(labels[i], 0) + 1
        sums[labels[i]] = sums.get(labels[i], 0.0) + dist
    return min(votes, key=lambda c: (-votes[c], sums[c], c))


hist = arrays(np.float64, 6, elements=st.one_of(st.just(0.0), st.floats(1e-6, 1)))


def test_chi_square_examples():
    h = np.array([0.2, 0.3, 0.5])
    assert C.chi_square(h, h) == 0
    assert C.chi_square([1, 0], [0, 1]) == pytest.approx(1 / (1 + 1e-10), rel=1e-15)
    assert C.chi_square([0, 0], [0, 0]) == 0
    with pytest.raises(ValueError):
        C.chi_square([1, 2], [1, 2, 3])


@settings(max_examples=100, deadline=None)
@given(hist, hist)
def test_chi_square_metric_properties(a, b):
    d = C.chi_square(a, b)
    assert d >= 0
    assert d == C.chi_square(b, a)
    assert (d == 0) == np.array_equal(a, b)
    assert d == pytest.approx(naive_chi2(a, b), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("backend", BACKENDS)
def test_chi2_matrix_matches_scalar(rng, backend):
    from cs_mbdct.kernels import chi2_matrix

    q = rng.random((7, 12))
    t = rng.random((9, 12))
    q[q < 0.5] = 0
    t[t < 0.5] = 0
    m = chi2_matrix(q, t, backend=backend)
    for i in range(7):
        for j in range(9):
            assert m[i, j] == pytest.approx(C.chi_square(q[i], t[j]), rel=1e-12)


def test_knn_simple_cases():
    train = np.array([[0.9, 0.1], [0.1, 0.9], [0.5, 0.5], [0.8, 0.2], [0.3, 0.7]])
    labels = np.array([0, 1, 1, 0, 1])
    m1 = C.KnnModel(train, labels, 1)
    assert C.knn_predict(m1, train[2]) == 1
    assert C.knn_predict(m1, FeatureVector(train[0])) == 0
    all5 = C.KnnModel(train, labels, 5)
    assert C.knn_predict(all5, np.array([0.95, 0.05])) == 1  # 3 of 5 votes
    m3 = C.KnnModel(train, labels, 3)
    q = np.array([0.6, 0.4])
    assert C.knn_predict(m3, q) == naive_knn(train, labels, q, 3)


def test_vote_tie_rules():
    # two neighbours each of classes 4 and 2; class 2 is closer in total
    train = np.array([[1.0, 0.0], [0.0, 1.0], [0.9, 0.1], [0.2, 0.8]])
    labels = np.array([4, 2, 4, 2])
    q = np.array([0.4, 0.6])
    model = C.KnnModel(train, labels, 4)
    assert C.knn_predict(model, q) == naive_knn(train, labels, q, 4) == 2
    # exact symmetry: equal counts and equal sums -> lower class id
    sym = C.KnnModel(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([7, 3]), 2)
    assert C.knn_predict(sym, np.array([0.5, 0.5])) == 3


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("seed", range(4))
def test_knn_bruteforce_oracle(backend, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 201))
    train = rng.random((n, 10)) ** 3
    labels = rng.integers(0, 4, n)
    queries = rng.random((15, 10)) ** 3
    queries[0] = train[5]
    for k in (1, 4, 7):
        model = C.KnnModel(train, labels, k)
        got = model.predict(queries, backend=backend)
        expect = [naive_knn(train, labels, q, k) for q in queries]
        np.testing.assert_array_equal(got, expect)


def test_knn_permutation_invariant(rng):
    train = rng.random((60, 5))
    labels = rng.integers(0, 3, 60)
    q = rng.random((20, 5))
    perm = rng.permutation(60)
    a = C.KnnModel(train, labels, 5).predict(q)
    b = C.KnnModel(train[perm], labels[perm], 5).predict(q)
    np.testing.assert_array_equal(a, b)


def test_knn_errors():
    with pytest.raises(ValueError):
        C.KnnModel(np.ones((3, 2)), [0, 1, 0], 4)
    with pytest.raises(ValueError):
        C.knn_predict(C.KnnModel(np.ones((3, 2)), [0, 1, 0], 1), np.ones(3))


def test_stratified_folds_balanced():
    labels = np.repeat(np.arange(3), [10, 7, 8])
    folds = C.stratified_folds(labels, 5, seed=0)
    assert np.bincount(folds).tolist() == [5, 5, 5, 5, 5]
    for c in range(3):
        per = np.bincount(folds[labels == c], minlength=5)
        assert per.max() - per.min() <= 1


def test_cv_separable_picks_smallest():
    x = np.vstack([np.tile([1.0, 0.0], (10, 1)), np.tile([0.0, 1.0], (10, 1))])
    x += np.linspace(0, 0.01, 20)[:, None]
    y = np.repeat([0, 1], 10)
    assert C.cross_validate_k(x, candidate_ks=(3, 1, 5), labels=y) == 1


def _mislabeled_set():
    t0 = np.linspace(0.0, 0.09, 10)
    t1 = np.linspace(0.91, 1.0, 9)
    t = np.concatenate([t0, t1, [0.045]])
    x = np.stack([1 - t, t], axis=1)
    y = np.array([0] * 10 + [1] * 9 + [1])  # last point sits among class 0
    return x, y


def test_cv_prefers_k3_over_overfitting_k1():
    x, y = _mislabeled_set()
    errs = C.cross_validation_errors(x, y, (1, 3), folds=5, seed=0)
    # enumeration oracle with the same folds
    folds = C.stratified_folds(y, 5, 0)
    for k in (1, 3):
        wrong = []
        for f in range(5):
            trn, val = folds != f, folds == f
            pred = [naive_knn(x[trn], y[trn], q, k) for q in x[val]]
            wrong.append(np.mean(np.array(pred) != y[val]))
        assert errs[k] == pytest.approx(np.mean(wrong))
    assert errs[1] > errs[3]
    assert C.cross_validate_k(x, (1, 3, 5), labels=y, seed=0) == 3


def test_cv_deterministic_and_errors(rng):
    x = rng.random((40, 4))
    y = rng.integers(0, 3, 40)
    assert C.cross_validation_errors(x, y, seed=5) == C.cross_validation_errors(x, y, seed=5)
    with pytest.raises(ValueError):
        C.cross_validate_k(x[:3], labels=y[:3], folds=5)
    with pytest.raises(ValueError):
        C.cross_validate_k(x, labels=y, folds=1)


def test_evaluate_basics(rng):
    x = rng.random((30, 6))
    y = rng.integers(0, 3, 30)
    rep = C.evaluate(C.KnnModel(x, y, 1), x, y)
    assert rep.error_rate == 0.0
    assert rep.confusion.sum() == 30
    np.testing.assert_array_equal(rep.confusion.sum(axis=1), np.bincount(y, minlength=3))
    one = C.evaluate(C.KnnModel(x, np.full(30, 2), 1), x[:5], np.full(5, 2))
    assert one.confusion[2, 2] == 5 and one.confusion.sum() == 5
    with pytest.raises(ValueError):
        C.evaluate(C.KnnModel(x, y, 1), np.empty((0, 6)), np.empty(0, dtype=int))


def test_evaluate_recount(rng):
    x = rng.random((100, 8))
    y = rng.integers(0, 10, 100)
    model = C.KnnModel(x[:70], y[:70], 3)
    rep = C.evaluate(model, x[70:], y[70:])
    pred = [naive_knn(x[:70], y[:70], q, 3) for q in x[70:]]
    assert rep.error_rate == pytest.approx(np.mean(np.array(pred) != y[70:]))
    assert rep.error_rate == pytest.approx(1 - np.trace(rep.confusion) / rep.confusion.sum())
