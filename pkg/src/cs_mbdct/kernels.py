"""Hot loops, each with a numba and a numpy implementation.

The public functions dispatch on ``backend`` (``None`` -> environment
default, see ``_backend``). Both paths return identical integers; float
kernels agree to summation-order rounding.
"""

import numpy as np

from . import _backend
from .bits import unpack_bits

if _backend.HAVE_NUMBA:
    from numba import njit, prange
else:  # pragma: no cover
    njit = prange = None

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)
_S1, _S2, _S4, _S56 = np.uint64(1), np.uint64(2), np.uint64(4), np.uint64(56)

# numpy path keeps temporaries around this many elements
_CHUNK_ELEMS = 1 << 22


if njit is not None:

    @njit(inline="always", cache=True)
    def _popcount64(x):
        x = x - ((x >> _S1) & _M1)
        x = (x & _M2) + ((x >> _S2) & _M2)
        x = (x + (x >> _S4)) & _M4
        return (x * _H01) >> _S56

    @njit(parallel=True, cache=True)
    def _hamming_assign_nb(x, c):
        n, w = x.shape
        k = c.shape[0]
        labels = np.empty(n, dtype=np.int64)
        dists = np.empty(n, dtype=np.int64)
        for i in prange(n):
            best = np.int64(1) << 62
            arg = 0
            for j in range(k):
                d = np.int64(0)
                for t in range(w):
                    d += np.int64(_popcount64(x[i, t] ^ c[j, t]))
                    if d >= best:
                        break
                if d < best:
                    best = d
                    arg = j
            labels[i] = arg
            dists[i] = best
        return labels, dists

    @njit(parallel=True, cache=True)
    def _hamming_matrix_nb(a, b):
        na, w = a.shape
        nb = b.shape[0]
        out = np.empty((na, nb), dtype=np.int64)
        for i in prange(na):
            for j in range(nb):
                d = np.int64(0)
                for t in range(w):
                    d += np.int64(_popcount64(a[i, t] ^ b[j, t]))
                out[i, j] = d
        return out

    @njit(parallel=True, cache=True)
    def _majority_counts_nb(x, labels, k, nbits):
        n, w = x.shape
        sizes = np.zeros(k, dtype=np.int64)
        for i in range(n):
            sizes[labels[i]] += 1
        starts = np.zeros(k + 1, dtype=np.int64)
        starts[1:] = np.cumsum(sizes)
        order = np.argsort(labels, kind="mergesort")
        counts = np.zeros((k, nbits), dtype=np.int64)
        one = np.uint64(1)
        for j in prange(k):
            for p in range(starts[j], starts[j + 1]):
                i = order[p]
                for t in range(w):
                    word = x[i, t]
                    base = t * 64
                    top = min(64, nbits - base)
                    for b in range(top):
                        counts[j, base + b] += np.int64(word & one)
                        word >>= one
        return counts, sizes

    @njit(parallel=True, cache=True)
    def _chi2_matrix_nb(q, t, eps):
        nq, d = q.shape
        nt = t.shape[0]
        out = np.empty((nq, nt), dtype=np.float64)
        for i in prange(nq):
            for j in range(nt):
                s = 0.0
                for h in range(d):
                    a = q[i, h]
                    b = t[j, h]
                    den = a + b
                    diff = a - b
                    term = diff * diff / (den + eps)
                    # select, not branch: sparse histograms mispredict badly
                    s += term if den != 0.0 else 0.0
                out[i, j] = 0.5 * s
        return out


def _hamming_rows_np(x, c):
    """(n, w) vs (k, w) -> (n, k) distances."""
    out = np.empty((len(x), len(c)), dtype=np.int64)
    step = max(1, _CHUNK_ELEMS // max(1, c.size))
    for s in range(0, len(x), step):
        xor = x[s:s + step, None, :] ^ c[None, :, :]
        out[s:s + step] = np.bitwise_count(xor).sum(axis=-1, dtype=np.int64)
    return out


def _hamming_assign_np(x, c):
    labels = np.empty(len(x), dtype=np.int64)
    dists = np.empty(len(x), dtype=np.int64)
    step = max(1, _CHUNK_ELEMS // max(1, c.size))
    for s in range(0, len(x), step):
        d = _hamming_rows_np(x[s:s + step], c)
        lab = d.argmin(axis=1)  # first minimum -> lowest centroid index
        labels[s:s + step] = lab
        dists[s:s + step] = d[np.arange(len(d)), lab]
    return labels, dists


def _majority_counts_np(x, labels, k, nbits):
    sizes = np.bincount(labels, minlength=k).astype(np.int64)
    counts = np.zeros((k, nbits), dtype=np.int64)
    order = np.argsort(labels, kind="stable")
    bits = unpack_bits(x[order], nbits).astype(np.int64)
    present = np.flatnonzero(sizes)
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))[present]
    if len(present):
        counts[present] = np.add.reduceat(bits, starts, axis=0)
    return counts, sizes


def _chi2_matrix_np(q, t, eps):
    out = np.empty((len(q), len(t)), dtype=np.float64)
    step = max(1, _CHUNK_ELEMS // max(1, t.size))
    for s in range(0, len(q), step):
        a = q[s:s + step, None, :]
        den = a + t[None, :, :]
        diff = a - t[None, :, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(den != 0.0, diff * diff / (den + eps), 0.0)
        out[s:s + step] = 0.5 * terms.sum(axis=-1)
    return out


def _u64(a):
    return np.ascontiguousarray(a, dtype=np.uint64)


def hamming_assign(x, centroids, backend=None):
    """Nearest centroid for each packed row; ties go to the lowest index.

    Returns ``(labels, distances)``.
    """
    x, centroids = _u64(x), _u64(centroids)
    if x.shape[1] != centroids.shape[1]:
        raise ValueError("descriptor and centroid word counts differ")
    if _backend.resolve(backend) == "numba":
        return _hamming_assign_nb(x, centroids)
    return _hamming_assign_np(x, centroids)


def hamming_matrix(a, b, backend=None):
    a, b = _u64(a), _u64(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError("word counts differ")
    if _backend.resolve(backend) == "numba":
        return _hamming_matrix_nb(a, b)
    return _hamming_rows_np(a, b)


def majority_counts(x, labels, k, nbits, backend=None):
    """Per-cluster count of set bits, shape (k, nbits), plus cluster sizes."""
    x = _u64(x)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if _backend.resolve(backend) == "numba":
        return _majority_counts_nb(x, labels, int(k), int(nbits))
    return _majority_counts_np(x, labels, int(k), int(nbits))


def chi2_matrix(q, t, eps=1e-10, backend=None):
    """0.5 * sum (a-b)^2 / (a+b+eps) for every (query, train) pair;
    bins with a+b == 0 contribute nothing."""
    q = np.ascontiguousarray(q, dtype=np.float64)
    t = np.ascontiguousarray(t, dtype=np.float64)
    if q.shape[1] != t.shape[1]:
        raise ValueError(f"dimension mismatch: {q.shape[1]} vs {t.shape[1]}")
    if _backend.resolve(backend) == "numba":
        return _chi2_matrix_nb(q, t, float(eps))
    return _chi2_matrix_np(q, t, float(eps))
