"""Joint nonnegative factorization solver producing node embeddings.

Minimizes, over nonnegative factors Z (n x m), V (n x k), U (k x m),
H (k x d):

    ||A - Z Z^T||_F^2 + alpha ||Z - V U||_F^2 + beta ||V H - B||_F^2
        + gamma (||U||_F^2 + ||H||_F^2)

by alternating multiplicative updates (majorization-minimization form), one
sweep per iteration in the order Z, V, H, U.  A is the graph adjacency, B
the low-order feature matrix; the embedding is V.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .features import FeatureMatrix
from .graph import Graph, degrees

EPS = 1e-12
LOSS_INCREASE_TOL = 1e-9


class NumericError(RuntimeError):
    """Non-finite factor values or a loss increase beyond tolerance."""


@dataclass(frozen=True)
class HyperParams:
    """Solver knobs; defaults sit in the empirically stable region."""

    alpha: float = 50.0
    beta: float = 20.0
    gamma: float = 20.0
    m: int = 200
    k: int = 128
    delta: float = 1e-4
    max_iter: int = 1000
    seed: int = 0

    def validate(self, n: int) -> None:
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise ValueError("alpha, beta, gamma must be positive")
        if not 1 <= self.m <= n:
            raise ValueError(f"m must lie in [1, {n}]")
        if not 1 <= self.k <= n:
            raise ValueError(f"k must lie in [1, {n}]")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")


@dataclass
class Factors:
    """Current factor matrices; every entry stays >= 0 and finite."""

    Z: np.ndarray
    V: np.ndarray
    U: np.ndarray
    H: np.ndarray


@dataclass
class EmbeddingModel:
    """Fitted factors plus the per-iteration loss trace."""

    factors: Factors
    loss_trace: list[tuple[int, float]]
    converged: bool
    iterations_run: int

    @property
    def embedding(self) -> np.ndarray:
        return self.factors.V


def init_factors(n: int, m: int, k: int, d: int, seed: int) -> Factors:
    """Uniform random factors on [1e-6, 1); strictly positive entries avoid
    lock-in at zero under multiplicative updates."""
    rng = np.random.default_rng(seed)

    def draw(rows, cols):
        return rng.uniform(1e-6, 1.0, size=(rows, cols))

    return Factors(Z=draw(n, m), V=draw(n, k), U=draw(k, m), H=draw(k, d))


# ---------------------------------------------------------------------------
# adjacency adapters: the same update/loss code runs on a Graph (CSR) or a
# dense symmetric ndarray (used by the small-instance tests)
# ---------------------------------------------------------------------------

def _adj_matmul(A, X: np.ndarray) -> np.ndarray:
    if isinstance(A, Graph):
        return _kernels.csr_matmul(A.indptr, A.indices, A.weights, X)
    return A @ X


def _adj_pair_dot(A, Z: np.ndarray) -> float:
    """<A, Z Z^T> without forming Z Z^T when A is sparse."""
    if isinstance(A, Graph):
        return _kernels.csr_pair_dot(A.indptr, A.indices, A.weights, Z)
    return float(np.vdot(A, Z @ Z.T))


def _adj_fro2(A) -> float:
    if isinstance(A, Graph):
        return float(np.dot(A.weights, A.weights))
    return float(np.vdot(A, A))


def _feature_array(B) -> np.ndarray:
    if isinstance(B, FeatureMatrix):
        return B.matrix
    return np.asarray(B, dtype=np.float64)


def loss(A, B, factors: Factors, hp: HyperParams) -> float:
    """Objective value; <A, Z Z^T> is accumulated edge-wise so Z Z^T is never
    materialized for sparse adjacencies."""
    B = _feature_array(B)
    Z, V, U, H = factors.Z, factors.V, factors.U, factors.H
    G = Z.T @ Z
    recon = _adj_fro2(A) - 2.0 * _adj_pair_dot(A, Z) + float(np.vdot(G, G))
    local = float(((Z - V @ U) ** 2).sum())
    feat = float(((V @ H - B) ** 2).sum())
    reg = float((U**2).sum() + (H**2).sum())
    return recon + hp.alpha * local + hp.beta * feat + hp.gamma * reg


def _check_finite(X: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(X)):
        raise NumericError(f"non-finite entries in updated {name}")
    return X


def update_Z(A, Z, V, U, alpha: float) -> np.ndarray:
    """Z <- Z * (2 A Z + alpha V U) / (2 Z Z^T Z + alpha Z + eps)."""
    num = 2.0 * _adj_matmul(A, Z) + alpha * (V @ U)
    den = 2.0 * (Z @ (Z.T @ Z)) + alpha * Z + EPS
    return _check_finite(Z * (num / den), "Z")


def update_V(Z, B, V, U, H, alpha: float, beta: float) -> np.ndarray:
    """V <- V * (alpha Z U^T + beta B H^T) / (alpha V U U^T + beta V H H^T + eps)."""
    B = _feature_array(B)
    num = alpha * (Z @ U.T) + beta * (B @ H.T)
    den = alpha * (V @ (U @ U.T)) + beta * (V @ (H @ H.T)) + EPS
    return _check_finite(V * (num / den), "V")


def update_H(V, B, H, beta: float, gamma: float) -> np.ndarray:
    """H <- H * (beta V^T B) / (beta V^T V H + gamma H + eps)."""
    B = _feature_array(B)
    num = beta * (V.T @ B)
    den = beta * ((V.T @ V) @ H) + gamma * H + EPS
    return _check_finite(H * (num / den), "H")


def update_U(Z, V, U, alpha: float, gamma: float) -> np.ndarray:
    """U <- U * (alpha V^T Z) / (alpha V^T V U + gamma U + eps)."""
    num = alpha * (V.T @ Z)
    den = alpha * ((V.T @ V) @ U) + gamma * U + EPS
    return _check_finite(U * (num / den), "U")


def kkt_residual(A, B, factors: Factors, hp: HyperParams) -> float:
    """Complementary-slackness residual: max over factors of
    ||gradient * factor||_inf; near zero at a stationary point of the
    nonnegativity-constrained objective."""
    B = _feature_array(B)
    Z, V, U, H = factors.Z, factors.V, factors.U, factors.H
    a, b, g = hp.alpha, hp.beta, hp.gamma
    fit_Z = Z - V @ U
    fit_B = V @ H - B
    grad_Z = -4.0 * _adj_matmul(A, Z) + 4.0 * (Z @ (Z.T @ Z)) + 2.0 * a * fit_Z
    grad_V = 2.0 * a * (-fit_Z @ U.T) + 2.0 * b * (fit_B @ H.T)
    grad_H = 2.0 * b * (V.T @ fit_B) + 2.0 * g * H
    grad_U = 2.0 * a * (V.T @ -fit_Z) + 2.0 * g * U
    return max(
        float(np.abs(grad_Z * Z).max()),
        float(np.abs(grad_V * V).max()),
        float(np.abs(grad_H * H).max()),
        float(np.abs(grad_U * U).max()),
    )


def fit(g: Graph, B, hp: HyperParams) -> EmbeddingModel:
    """Alternating multiplicative optimization until the relative loss drop
    falls below delta or max_iter sweeps have run.

    The trace records (0, initial loss) followed by one entry per sweep; a
    loss increase beyond 1e-9 raises NumericError since the updates are
    non-increasing by construction.
    """
    B = _feature_array(B)
    hp.validate(g.n)
    if B.shape[0] != g.n:
        raise ValueError("feature matrix row count must equal node count")
    if np.any(degrees(g) <= 0):
        raise ValueError("graph has isolated nodes; restrict to the largest component")

    d = B.shape[1]
    factors = init_factors(g.n, hp.m, hp.k, d, hp.seed)
    prev = loss(g, B, factors, hp)
    trace = [(0, prev)]
    converged = False
    iterations = 0

    for it in range(1, hp.max_iter + 1):
        factors.Z = update_Z(g, factors.Z, factors.V, factors.U, hp.alpha)
        factors.V = update_V(
            factors.Z, B, factors.V, factors.U, factors.H, hp.alpha, hp.beta
        )
        factors.H = update_H(factors.V, B, factors.H, hp.beta, hp.gamma)
        factors.U = update_U(factors.Z, factors.V, factors.U, hp.alpha, hp.gamma)
        current = loss(g, B, factors, hp)
        if current > prev + LOSS_INCREASE_TOL:
            raise NumericError(
                f"loss increased at iteration {it}: {prev:.12g} -> {current:.12g}"
            )
        trace.append((it, current))
        iterations = it
        if prev > 0.0 and (prev - current) / prev < hp.delta:
            converged = True
            break
        prev = current

    return EmbeddingModel(
        factors=factors,
        loss_trace=trace,
        converged=converged,
        iterations_run=iterations,
    )


# ---------------------------------------------------------------------------
# embedding and trace files
# ---------------------------------------------------------------------------

def write_embedding(path, V: np.ndarray, node_ids) -> None:
    """Text format: header ``n k``, then ``original_id v_1 ... v_k`` rows
    with 17-significant-digit floats (exact float64 round trip)."""
    n, k = V.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("%d %d\n" % (n, k))
        for i in range(n):
            row = " ".join("%.17g" % x for x in V[i])
            fh.write("%d %s\n" % (node_ids[i], row))


def read_embedding(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of write_embedding: (original node ids, V)."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().split()
        n, k = int(first[0]), int(first[1])
        ids = np.empty(n, dtype=np.int64)
        V = np.empty((n, k))
        for i in range(n):
            parts = fh.readline().split()
            ids[i] = int(parts[0])
            V[i] = [float(x) for x in parts[1:]]
    return ids, V


def write_loss_trace(path, trace) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iter,loss\n")
        for it, value in trace:
            fh.write("%d,%.17g\n" % (it, value))
