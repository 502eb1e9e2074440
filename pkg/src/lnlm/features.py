"""Random-walk feature matrix and its truncated-SVD reduction.

The walk statistic averages the first ``window`` transition-matrix powers,
right-scaled by inverse degrees; entries are mapped through
``log(max(vol(G) * s / negative, 1))``, which clamps weak statistics to zero
and keeps the matrix non-negative.  A rank-``dim`` factor of that matrix
(scaled left singular vectors) is the feature matrix consumed by the solver.

Memory note: the walk matrix is materialized explicitly.  Its nonzero
pattern is bounded by the ``window``-step reachability, but a dense export
costs n^2 * 8 bytes; the dense path is meant for n up to a few thousand.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import Graph, degrees, volume


@dataclass(frozen=True)
class LowOrderParams:
    """Walk-feature knobs: window size, negative-sampling constant, rank."""

    window: int = 5
    negative: float = 1.0
    dim: int = 128

    def validate(self, n: int) -> None:
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negative <= 0.0:
            raise ValueError("negative-sampling constant must be positive")
        if not 1 <= self.dim <= n:
            raise ValueError(f"dim must lie in [1, {n}]")


@dataclass(frozen=True)
class FeatureMatrix:
    """Rank-d node features: B = U_d * sqrt(Sigma_d), singular values descending."""

    matrix: np.ndarray
    singular_values: np.ndarray

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])


def _checked_inverse_degrees(g: Graph) -> np.ndarray:
    d = degrees(g)
    if np.any(d <= 0):
        bad = int(np.flatnonzero(d <= 0)[0])
        raise ValueError(
            f"node {bad} is isolated; restrict to the largest component first"
        )
    return 1.0 / d


def _transition_csr(g: Graph) -> sp.csr_matrix:
    dinv = _checked_inverse_degrees(g)
    rows = np.repeat(np.arange(g.n), np.diff(g.indptr))
    P = sp.csr_matrix(
        (g.weights * dinv[rows], g.indices, g.indptr), shape=(g.n, g.n)
    )
    return P


def transition_matrix(g: Graph) -> np.ndarray:
    """Row-stochastic P = D^-1 A as a dense array."""
    return _transition_csr(g).toarray()


def walk_matrix_csr(g: Graph, params: LowOrderParams) -> sp.csr_matrix:
    """Sparse form of the log-clamped walk feature matrix.

    Zero entries of the averaged walk statistic clamp to exactly zero under
    log(max(x, 1)), so the sparse and dense forms hold identical values.
    """
    params.validate(g.n)
    dinv = _checked_inverse_degrees(g)
    P = _transition_csr(g)
    acc = P.copy()
    cur = P
    for _ in range(params.window - 1):
        cur = cur @ P
        acc = acc + cur
    S = acc.tocsr()
    # right-multiply by D^-1, then average over the window
    S.data *= dinv[S.indices] / params.window

    scale = volume(g) / params.negative
    S.data = np.log(np.maximum(S.data * scale, 1.0))
    if not np.all(np.isfinite(S.data)):
        raise FloatingPointError("non-finite walk statistic (zero-degree node?)")
    S.eliminate_zeros()
    return S


def netmf_matrix(g: Graph, params: LowOrderParams) -> np.ndarray:
    """Dense log-clamped walk feature matrix (the closed-form skip-gram target)."""
    return walk_matrix_csr(g, params).toarray()


def truncated_svd(
    M,
    d: int,
    seed: int,
    oversample: int = 10,
    power_iters: int = 7,
) -> FeatureMatrix:
    """Top-d factor B = U_d sqrt(Sigma_d) of a dense or CSR matrix.

    Uses a seeded randomized range finder with QR-stabilized power
    iterations; when the sketch width reaches min(M.shape) the result is
    exact up to roundoff.  Deterministic for a fixed seed.
    """
    n, cols = M.shape
    if not 1 <= d <= min(n, cols):
        raise ValueError(f"d must lie in [1, {min(n, cols)}]")
    sparse_input = sp.issparse(M)
    if not sparse_input:
        M = np.asarray(M, dtype=np.float64)
        if not np.all(np.isfinite(M)):
            raise ValueError("input matrix has non-finite entries")
    elif not np.all(np.isfinite(M.data)):
        raise ValueError("input matrix has non-finite entries")

    p = min(min(n, cols), d + oversample)
    if p == min(n, cols):
        dense = M.toarray() if sparse_input else M
        U, s, _ = np.linalg.svd(dense, full_matrices=False)
        return FeatureMatrix(
            matrix=U[:, :d] * np.sqrt(s[:d]),
            singular_values=s[:d].copy(),
        )

    rng = np.random.default_rng(seed)
    Y = M @ rng.standard_normal((cols, p))
    Q, _ = np.linalg.qr(Y)
    for _ in range(power_iters):
        W, _ = np.linalg.qr(M.T @ Q)
        Q, _ = np.linalg.qr(M @ W)
    small = (M.T @ Q).T  # Q^T M, works for both dense and CSR
    Ub, s, _ = np.linalg.svd(small, full_matrices=False)
    U = Q @ Ub[:, :d]
    return FeatureMatrix(matrix=U * np.sqrt(s[:d]), singular_values=s[:d].copy())


def build_loworder_features(g: Graph, params: LowOrderParams, seed: int) -> FeatureMatrix:
    """Walk matrix followed by truncated SVD (kept sparse internally)."""
    params.validate(g.n)
    M = walk_matrix_csr(g, params)
    return truncated_svd(M, params.dim, seed)


# ---------------------------------------------------------------------------
# binary feature cache
# ---------------------------------------------------------------------------

_MAGIC = b"LNLMFEAT"
_VERSION = 1
_HEADER = struct.Struct("<8sHHQQQqd")


class CacheKeyError(ValueError):
    """Cache file exists but was built from different inputs."""


def graph_fingerprint(g: Graph) -> bytes:
    h = hashlib.sha256()
    h.update(struct.pack("<Q?", g.n, g.weighted))
    h.update(g.edges_u.astype("<i8").tobytes())
    h.update(g.edges_v.astype("<i8").tobytes())
    h.update(g.edges_w.astype("<f8").tobytes())
    return h.digest()


def write_feature_cache(
    path,
    g: Graph,
    params: LowOrderParams,
    seed: int,
    features: FeatureMatrix,
    walk_matrix: np.ndarray | None = None,
) -> None:
    """Little-endian binary cache of B (and optionally the dense walk matrix)."""
    flags = 1 if walk_matrix is not None else 0
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                _MAGIC,
                _VERSION,
                flags,
                g.n,
                features.dim,
                params.window,
                seed,
                params.negative,
            )
        )
        fh.write(graph_fingerprint(g))
        fh.write(np.ascontiguousarray(features.matrix, "<f8").tobytes())
        fh.write(np.ascontiguousarray(features.singular_values, "<f8").tobytes())
        if walk_matrix is not None:
            fh.write(np.ascontiguousarray(walk_matrix, "<f8").tobytes())


def read_feature_cache(
    path, g: Graph, params: LowOrderParams, seed: int
) -> tuple[FeatureMatrix, np.ndarray | None]:
    """Load a cache written by write_feature_cache; raises CacheKeyError on mismatch."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise CacheKeyError("truncated cache header")
        magic, version, flags, n, dim, window, cseed, negative = _HEADER.unpack(header)
        if magic != _MAGIC or version != _VERSION:
            raise CacheKeyError("not a feature cache file")
        fingerprint = fh.read(32)
        if (
            n != g.n
            or dim != params.dim
            or window != params.window
            or cseed != seed
            or negative != params.negative
            or fingerprint != graph_fingerprint(g)
        ):
            raise CacheKeyError("cache key does not match graph/parameters")
        B = np.frombuffer(fh.read(8 * n * dim), "<f8").reshape(n, dim).copy()
        sig = np.frombuffer(fh.read(8 * dim), "<f8").copy()
        M = None
        if flags & 1:
            M = np.frombuffer(fh.read(8 * n * n), "<f8").reshape(n, n).copy()
    return FeatureMatrix(matrix=B, singular_values=sig), M
