"""Chi-square k-nearest-neighbour classification with cross-validated k."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

EPS = 1e-10
DEFAULT_K_GRID = (1, 3, 5, 7, 9, 11)


def chi_square(a, b, eps: float = EPS) -> float:
    """0.5 * sum (a_i - b_i)^2 / (a_i + b_i + eps), skipping bins where a_i + b_i == 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    den = a + b
    mask = den != 0.0
    diff = a[mask] - b[mask]
    return float(0.5 * np.sum(diff * diff / (den[mask] + eps)))


def _values(features):
    if isinstance(features, np.ndarray):
        return np.atleast_2d(np.asarray(features, dtype=np.float64)), None
    feats = list(features)
    x = np.array([f.values for f in feats], dtype=np.float64)
    labels = [f.label for f in feats]
    y = None if any(lab is None for lab in labels) else np.array(labels, dtype=np.int64)
    return x, y


def _vote(neighbor_labels: np.ndarray, neighbor_dists: np.ndarray, n_classes: int) -> np.ndarray:
    """Majority label per row; ties -> smallest summed distance, then lowest class id."""
    q, k = neighbor_labels.shape
    rows = np.repeat(np.arange(q), k)
    counts = np.zeros((q, n_classes), dtype=np.int64)
    sums = np.zeros((q, n_classes), dtype=np.float64)
    np.add.at(counts, (rows, neighbor_labels.ravel()), 1)
    np.add.at(sums, (rows, neighbor_labels.ravel()), neighbor_dists.ravel())
    top = counts == counts.max(axis=1, keepdims=True)
    masked = np.where(top, sums, np.inf)
    best = top & (masked == masked.min(axis=1, keepdims=True))
    return best.argmax(axis=1)


@dataclass(frozen=True, eq=False)
class KnnModel:
    train: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,)
    k: int
    eps: float = EPS
    n_classes: int = field(default=0)

    def __post_init__(self):
        train = np.atleast_2d(np.asarray(self.train, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64)
        if len(train) != len(labels):
            raise ValueError(f"{len(train)} training vectors but {len(labels)} labels")
        if not 1 <= self.k <= len(train):
            raise ValueError(f"k={self.k} outside [1, {len(train)}]")
        object.__setattr__(self, "train", train)
        object.__setattr__(self, "labels", labels)
        if not self.n_classes:
            object.__setattr__(self, "n_classes", int(labels.max()) + 1)

    @classmethod
    def from_features(cls, features, k: int, labels=None) -> KnnModel:
        x, y = _values(features)
        if labels is not None:
            y = np.asarray(labels)
        if y is None:
            raise ValueError("training features need labels")
        return cls(x, y, k)

    def neighbors(self, queries: np.ndarray, k: int | None = None, backend=None):
        """Indices and distances of the k nearest training vectors,
        equal distances ordered by training index."""
        k = self.k if k is None else k
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        if queries.shape[1] != self.train.shape[1]:
            raise ValueError(f"query dimension {queries.shape[1]} != {self.train.shape[1]}")
        d = kernels.chi2_matrix(queries, self.train, self.eps, backend=backend)
        idx = np.argsort(d, axis=1, kind="stable")[:, :k]
        return idx, np.take_along_axis(d, idx, axis=1)

    def predict(self, queries, backend=None) -> np.ndarray:
        queries, _ = _values(queries)
        idx, dist = self.neighbors(queries, backend=backend)
        return _vote(self.labels[idx], dist, self.n_classes)


def knn_predict(model: KnnModel, query, backend=None) -> int:
    values = query.values if hasattr(query, "values") else query
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError("knn_predict takes a single query vector")
    return int(model.predict(values[None], backend=backend)[0])


def stratified_folds(labels: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Fold id per sample: each class is shuffled (PCG64) and dealt round-robin,
    continuing the rotation across classes so fold sizes differ by at most one."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=np.int64)
    start = 0
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        fold_of[members] = (start + np.arange(len(members))) % folds
        start = (start + len(members)) % folds
    return fold_of


def cross_validation_errors(x, y, candidate_ks=DEFAULT_K_GRID, folds: int = 5, seed: int = 0,
                            eps: float = EPS, backend=None) -> dict[int, float]:
    """Mean validation error for each candidate k."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if len(x) < folds:
        raise ValueError(f"{len(x)} samples cannot fill {folds} folds")
    ks = sorted({int(k) for k in candidate_ks})
    if not ks or ks[0] < 1:
        raise ValueError("candidate ks must be positive")
    n_classes = int(y.max()) + 1
    fold_of = stratified_folds(y, folds, seed)
    errors = {k: [] for k in ks}
    for f in range(folds):
        val = fold_of == f
        trn = ~val
        usable = [k for k in ks if k <= trn.sum()]
        if len(usable) < len(ks):
            raise ValueError(f"fold {f} has only {trn.sum()} training samples for k={ks[-1]}")
        model = KnnModel(x[trn], y[trn], ks[-1], eps, n_classes)
        idx, dist = model.neighbors(x[val], backend=backend)
        for k in ks:
            pred = _vote(model.labels[idx[:, :k]], dist[:, :k], n_classes)
            errors[k].append(float(np.mean(pred != y[val])))
    return {k: float(np.mean(v)) for k, v in errors.items()}


def cross_validate_k(features, candidate_ks=DEFAULT_K_GRID, folds: int = 5, seed: int = 0,
                     labels=None, backend=None) -> int:
    """k with the lowest mean validation error; ties -> smallest k."""
    x, y = _values(features)
    if labels is not None:
        y = np.asarray(labels)
    if y is None:
        raise ValueError("cross-validation needs labelled features")
    return best_k(cross_validation_errors(x, y, candidate_ks, folds, seed, backend=backend))


def best_k(errors: dict[int, float]) -> int:
    """Lowest mean validation error; ties -> smallest k."""
    best = min(errors.values())
    return min(k for k, e in errors.items() if e == best)


@dataclass
class EvalReport:
    error_rate: float
    confusion: np.ndarray  # rows: true class, cols: predicted
    meta: dict = field(default_factory=dict)

    def record(self) -> dict:
        rec = dict(self.meta)
        rec["error_rate"] = self.error_rate
        return rec


def evaluate(model: KnnModel, test, labels=None, meta: dict | None = None, backend=None) -> EvalReport:
    x, y = _values(test)
    if labels is not None:
        y = np.asarray(labels, dtype=np.int64)
    if y is None:
        raise ValueError("test features need labels")
    if len(x) == 0:
        raise ValueError("empty test set")
    pred = model.predict(x, backend=backend)
    n_classes = max(model.n_classes, int(y.max()) + 1, int(pred.max()) + 1)
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y, pred), 1)
    error = 1.0 - np.trace(confusion) / confusion.sum()
    meta = dict(meta or {})
    meta.setdefault("k", model.k)
    return EvalReport(float(error), confusion, meta)
