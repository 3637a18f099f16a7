"""Binary visual dictionary (Hamming k-means), bag-of-words encoding and fusion."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .bits import n_words, pack_bits, unpack_bits
from .descriptor import BinaryDescriptor
from .errors import ConsistencyError, FormatError, TruncatedFileError

log = logging.getLogger(__name__)

CODEBOOK_MAGIC = "CBOOK"
FEATURE_MAGIC = "FEAT"
VERSION = "v1"
_TEXT_BYTES = frozenset(b"0123456789+-.eEinfaINFA \t\r\n")


@dataclass(frozen=True, eq=False)
class Codebook:
    centroids: np.ndarray  # (k, n_words) uint64
    n_bits: int
    training_meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.centroids)


@dataclass
class FeatureVector:
    values: np.ndarray
    label: int | None = None
    kind: str = "bow"  # bow | external | fused


def _as_packed(descriptors, n_bits=None) -> tuple[np.ndarray, int]:
    """Accept a list of BinaryDescriptor or a packed (n, n_words) array."""
    if isinstance(descriptors, np.ndarray):
        if n_bits is None:
            raise ValueError("n_bits is required with a packed array")
        words = np.ascontiguousarray(descriptors, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != n_words(n_bits):
            raise ValueError(f"packed descriptors of shape {words.shape} do not hold {n_bits} bits")
        return words, int(n_bits)
    descriptors = list(descriptors)
    if not descriptors:
        return np.zeros((0, n_words(n_bits or 0)), dtype=np.uint64), int(n_bits or 0)
    lengths = {d.n_bits for d in descriptors}
    if len(lengths) != 1:
        raise ValueError(f"descriptors have mixed bit lengths {sorted(lengths)}")
    nb = lengths.pop()
    if n_bits is not None and nb != n_bits:
        raise ValueError(f"descriptor length {nb} != expected {n_bits}")
    return np.stack([d.words for d in descriptors]).astype(np.uint64), nb


def hamming(a, b) -> int:
    """Number of differing bits between two descriptors or 0/1 vectors."""
    if isinstance(a, BinaryDescriptor) and isinstance(b, BinaryDescriptor):
        if a.n_bits != b.n_bits:
            raise ValueError(f"bit lengths differ: {a.n_bits} vs {b.n_bits}")
        return int(np.bitwise_count(a.words ^ b.words).sum())
    a = np.asarray(a.bits if isinstance(a, BinaryDescriptor) else a).astype(bool)
    b = np.asarray(b.bits if isinstance(b, BinaryDescriptor) else b).astype(bool)
    if a.shape != b.shape:
        raise ValueError(f"bit lengths differ: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def _majority(words, labels, k, n_bits, backend):
    counts, sizes = kernels.majority_counts(words, labels, k, n_bits, backend=backend)
    # bit ties go to 1
    return pack_bits(2 * counts >= sizes[:, None]), sizes


def _repair_empty(words, labels, dists, centroids, k, backend):
    """Give every empty cluster the descriptor farthest from its centroid."""
    sizes = np.bincount(labels, minlength=k)
    empty = np.flatnonzero(sizes == 0)
    if not len(empty):
        return 0
    reach = dists.copy()  # distance to the nearest centroid, new ones included
    for j in empty:
        movable = sizes[labels] > 1
        cand = np.where(movable, reach, -1)
        i = int(np.argmax(cand))  # lowest index among the farthest
        if cand[i] <= 0:
            raise RuntimeError("cannot repair empty cluster: all descriptors sit on centroids")
        sizes[labels[i]] -= 1
        sizes[j] = 1
        labels[i] = j
        dists[i] = 0
        centroids[j] = words[i]
        # keep later seizures from duplicating this centroid
        np.minimum(reach, kernels.hamming_matrix(words, words[i:i + 1], backend=backend)[:, 0], out=reach)
    return len(empty)


def kmeans_hamming(descriptors, k: int, seed: int = 0, max_iters: int = 100,
                   n_bits: int | None = None, backend: str | None = None) -> Codebook:
    """Lloyd iterations in Hamming space with bitwise-majority centroids.

    Centroids start at ``k`` distinct descriptors chosen with a PCG64 stream
    seeded by ``seed``. Assignment ties go to the lowest centroid index and
    empty clusters seize the descriptor farthest from its centroid. Stops
    when assignments repeat or after ``max_iters`` updates.
    """
    words, nb = _as_packed(descriptors, n_bits)
    n = len(words)
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"{n} descriptors cannot seed {k} clusters")
    uniq_idx = np.sort(np.unique(words, axis=0, return_index=True)[1])
    if len(uniq_idx) < k:
        raise ValueError(f"only {len(uniq_idx)} distinct descriptors for {k} clusters")
    rng = np.random.default_rng(seed)
    centroids = words[np.sort(rng.choice(uniq_idx, size=k, replace=False))].copy()

    labels, dists = kernels.hamming_assign(words, centroids, backend=backend)
    repairs = _repair_empty(words, labels, dists, centroids, k, backend)
    inertia = [int(dists.sum())]
    iters = 0
    converged = False
    for iters in range(1, max_iters + 1):
        centroids, _ = _majority(words, labels, k, nb, backend)
        new_labels, dists = kernels.hamming_assign(words, centroids, backend=backend)
        repairs += _repair_empty(words, new_labels, dists, centroids, k, backend)
        inertia.append(int(dists.sum()))
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
    meta = {
        "seed": int(seed),
        "iterations": iters,
        "converged": converged,
        "n_descriptors": n,
        "empty_repairs": int(repairs),
        "inertia": inertia,
    }
    log.debug("kmeans k=%d: %d iterations, inertia %d", k, iters, inertia[-1])
    return Codebook(centroids, nb, meta)


def inertia(descriptors, codebook: Codebook, backend: str | None = None) -> int:
    words, _ = _as_packed(descriptors, codebook.n_bits)
    return int(kernels.hamming_assign(words, codebook.centroids, backend=backend)[1].sum())


def encode_bow(descriptors, codebook: Codebook, label: int | None = None,
               backend: str | None = None) -> FeatureVector:
    """Hard-vote each descriptor to its nearest codeword and average-pool."""
    words, _ = _as_packed(descriptors, codebook.n_bits)
    if len(words) == 0:
        raise ValueError("cannot encode an empty descriptor set")
    return FeatureVector(encode_bow_batch(words[None], codebook, backend=backend)[0], label, "bow")


def encode_bow_batch(words: np.ndarray, codebook: Codebook, backend: str | None = None) -> np.ndarray:
    """(N, P, n_words) packed descriptors -> (N, k) average-pooled histograms."""
    words = np.asarray(words, dtype=np.uint64)
    n, p, w = words.shape
    if w != codebook.centroids.shape[1]:
        raise ValueError("descriptor length does not match the codebook")
    if p == 0:
        raise ValueError("cannot encode an empty descriptor set")
    labels, _ = kernels.hamming_assign(words.reshape(n * p, w), codebook.centroids, backend=backend)
    labels = labels.reshape(n, p) + (np.arange(n) * codebook.k)[:, None]
    counts = np.bincount(labels.ravel(), minlength=n * codebook.k).reshape(n, codebook.k)
    return counts / p


def l2_normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v.copy()


def fuse(a: FeatureVector, b: FeatureVector) -> FeatureVector:
    """Concatenate the separately L2-normalized values of two feature vectors."""
    if a.label is not None and b.label is not None and a.label != b.label:
        raise ConsistencyError(f"cannot fuse features of classes {a.label} and {b.label}")
    label = a.label if a.label is not None else b.label
    return FeatureVector(np.concatenate([l2_normalize(a.values), l2_normalize(b.values)]), label, "fused")


def fuse_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise ``fuse`` for (N, da) and (N, db) arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) != len(b):
        raise ConsistencyError(f"{len(a)} rows vs {len(b)} rows")

    def rows(x):
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        return np.divide(x, norms, out=x.copy(), where=norms > 0)

    return np.hstack([rows(a), rows(b)])


def _read_header(path, magic: str, n_fields: int):
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise TruncatedFileError(f"{path}: missing {magic} header")
    parts = data[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 2 + n_fields or parts[0] != magic or parts[1] != VERSION:
        raise FormatError(f"{path}: bad header {data[:nl]!r}")
    try:
        fields = [int(x) for x in parts[2:]]
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer header field") from exc
    return fields, data[nl + 1:]


def save_codebook(codebook: Codebook, path) -> None:
    """``CBOOK v1 <k> <bits>`` then k centroids as little-endian uint64 words."""
    header = f"{CODEBOOK_MAGIC} {VERSION} {codebook.k} {codebook.n_bits}\n".encode("ascii")
    Path(path).write_bytes(header + codebook.centroids.astype("<u8").tobytes())


def load_codebook(path) -> Codebook:
    (k, nb), payload = _read_header(path, CODEBOOK_MAGIC, 2)
    w = n_words(nb)
    if len(payload) < 8 * k * w:
        raise TruncatedFileError(f"{path}: centroid payload is short")
    if len(payload) > 8 * k * w:
        raise FormatError(f"{path}: trailing bytes after centroids")
    cents = np.frombuffer(payload, dtype="<u8").reshape(k, w).astype(np.uint64)
    # pack/unpack round trip clears any stray padding bits
    if not np.array_equal(pack_bits(unpack_bits(cents, nb)), cents):
        raise FormatError(f"{path}: padding bits set beyond bit {nb}")
    return Codebook(cents, nb, {"source": str(path)})


def save_features(values, path, binary: bool = True) -> None:
    """``FEAT v1 <count> <dim>`` then rows of little-endian f64 (or text rows)."""
    if not isinstance(values, np.ndarray):
        values = np.array([fv.values for fv in values], dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    count, dim = values.shape
    header = f"{FEATURE_MAGIC} {VERSION} {count} {dim}\n".encode("ascii")
    if binary:
        payload = values.astype("<f8").tobytes()
    else:
        payload = "".join(" ".join(repr(float(v)) for v in row) + "\n" for row in values).encode("ascii")
    Path(path).write_bytes(header + payload)


def load_feature_matrix(path) -> np.ndarray:
    (count, dim), payload = _read_header(path, FEATURE_MAGIC, 2)
    if payload and set(payload) <= _TEXT_BYTES:
        rows = [r for r in payload.decode("ascii").splitlines() if r.strip()]
        parsed = [r.split() for r in rows]
        if any(len(r) != dim for r in parsed):
            raise FormatError(f"{path}: rows must all hold {dim} values")
        if len(parsed) != count:
            raise FormatError(f"{path}: header declares {count} rows, found {len(parsed)}")
        try:
            return np.array([[float(t) for t in r] for r in parsed], dtype=np.float64).reshape(count, dim)
        except ValueError as exc:
            raise FormatError(f"{path}: unparsable value") from exc
    if len(payload) < 8 * count * dim:
        raise TruncatedFileError(f"{path}: feature payload is short")
    if len(payload) > 8 * count * dim:
        raise FormatError(f"{path}: trailing bytes after features")
    return np.frombuffer(payload, dtype="<f8").reshape(count, dim).astype(np.float64)


def load_external_features(path) -> list[FeatureVector]:
    return [FeatureVector(row, None, "external") for row in load_feature_matrix(path)]
