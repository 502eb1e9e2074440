"""Hot inner-loop kernels: numba-compiled with a pure-numpy fallback.

The dense factor products in the solver go through BLAS and need no help;
the loops here are the ones BLAS does not cover (CSR adjacency products,
the edge-wise quadratic form of the reconstruction loss, and the k-means
assignment step).

Set ``LNLM_DISABLE_NUMBA=1`` to force the numpy fallbacks (also used
automatically when numba is not importable).  ``benchmarks/bench_kernels.py``
compares the two paths.
"""

import os

import numpy as np

_DISABLE = os.environ.get("LNLM_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
    "on",
)


# ---------------------------------------------------------------------------
# pure-numpy implementations (reference path)
# ---------------------------------------------------------------------------

def _csr_matmul_np(indptr, indices, data, X):
    n = indptr.shape[0] - 1
    out = np.zeros((n, X.shape[1]), dtype=np.float64)
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    np.add.at(out, rows, data[:, None] * X[indices])
    return out


def _csr_pair_dot_np(indptr, indices, data, Z):
    n = indptr.shape[0] - 1
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    pair = np.einsum("ij,ij->i", Z[rows], Z[indices])
    return float(np.dot(data, pair))


def _nearest_centroid_np(X, centers):
    n = X.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    best = np.full(n, np.inf)
    for c in range(centers.shape[0]):
        d = ((X - centers[c]) ** 2).sum(axis=1)
        better = d < best
        labels[better] = c
        best[better] = d[better]
    return labels, best


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if not _DISABLE:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _DISABLE = True

if not _DISABLE:

    @njit(cache=True)
    def _csr_matmul_nb(indptr, indices, data, X):
        n = indptr.shape[0] - 1
        m = X.shape[1]
        out = np.zeros((n, m), dtype=np.float64)
        for i in range(n):
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                w = data[p]
                for c in range(m):
                    out[i, c] += w * X[j, c]
        return out

    @njit(cache=True)
    def _csr_pair_dot_nb(indptr, indices, data, Z):
        n = indptr.shape[0] - 1
        m = Z.shape[1]
        acc = 0.0
        for i in range(n):
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                s = 0.0
                for c in range(m):
                    s += Z[i, c] * Z[j, c]
                acc += data[p] * s
        return acc

    @njit(cache=True)
    def _nearest_centroid_nb(X, centers):
        n, d = X.shape
        k = centers.shape[0]
        labels = np.zeros(n, dtype=np.int64)
        best = np.empty(n, dtype=np.float64)
        for i in range(n):
            bd = np.inf
            bc = 0
            for c in range(k):
                s = 0.0
                for f in range(d):
                    diff = X[i, f] - centers[c, f]
                    s += diff * diff
                if s < bd:
                    bd = s
                    bc = c
            labels[i] = bc
            best[i] = bd
        return labels, best


USING_NUMBA = not _DISABLE

if USING_NUMBA:
    _csr_matmul_impl = _csr_matmul_nb
    _csr_pair_dot_impl = _csr_pair_dot_nb
    _nearest_centroid_impl = _nearest_centroid_nb
else:
    _csr_matmul_impl = _csr_matmul_np
    _csr_pair_dot_impl = _csr_pair_dot_np
    _nearest_centroid_impl = _nearest_centroid_np


def csr_matmul(indptr, indices, data, X):
    """A @ X for a CSR matrix given by (indptr, indices, data)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    return _csr_matmul_impl(indptr, indices, data, X)


def csr_pair_dot(indptr, indices, data, Z):
    """sum_ij A_ij * (Z_i . Z_j), i.e. <A, Z Z^T> for CSR A."""
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    return float(_csr_pair_dot_impl(indptr, indices, data, Z))


def nearest_centroid(X, centers):
    """Per-row nearest centroid: (labels, squared distances)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    return _nearest_centroid_impl(X, centers)
