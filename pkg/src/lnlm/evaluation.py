"""Downstream evaluation: k-means/NMI clustering, one-vs-rest classification
with micro/macro F1, and link prediction with AUC over sampled non-edges."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import _kernels
from .graph import Graph, remove_edges_keep_connected
from .labels import LabelSet


@dataclass
class EvalReport:
    """One protocol run: metric means over repeats plus the resolved parameters."""

    task: str
    params: dict
    metrics: dict
    repeats: int
    per_repeat: list | None = None

    def to_json(self) -> str:
        payload = {
            "task": self.task,
            "params": self.params,
            "metrics": self.metrics,
            "repeats": self.repeats,
            "per_repeat": self.per_repeat,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")


# ---------------------------------------------------------------------------
# k-means clustering and NMI
# ---------------------------------------------------------------------------

def _kmeanspp_centers(X, clusters, rng):
    n = X.shape[0]
    centers = np.empty((clusters, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = ((X - centers[0]) ** 2).sum(axis=1)
    for c in range(1, clusters):
        total = closest.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centers[c] = X[idx]
        closest = np.minimum(closest, ((X - centers[c]) ** 2).sum(axis=1))
    return centers


def _lloyd(X, centers, tol=1e-8, max_iter=300):
    """Lloyd iterations; returns (labels, centers, per-iteration WCSS history).

    Empty clusters are repaired by re-seeding on the farthest point.
    """
    k = centers.shape[0]
    history = []
    labels = np.zeros(X.shape[0], dtype=np.int64)
    for _ in range(max_iter):
        labels, sqd = _kernels.nearest_centroid(X, centers)
        counts = np.bincount(labels, minlength=k)
        for c in np.flatnonzero(counts == 0):
            far = int(np.argmax(sqd))
            labels[far] = c
            centers[c] = X[far]
            sqd[far] = 0.0
            counts = np.bincount(labels, minlength=k)
        history.append(float(sqd.sum()))
        new_centers = np.zeros_like(centers)
        np.add.at(new_centers, labels, X)
        new_centers /= counts[:, None]
        shift = float(np.abs(new_centers - centers).max())
        centers = new_centers
        if shift < tol:
            break
    labels, sqd = _kernels.nearest_centroid(X, centers)
    return labels, centers, history, float(sqd.sum())


def kmeans(X, clusters: int, restarts: int = 10, seed: int = 0) -> np.ndarray:
    """Standard k-means (k-means++ seeding, Lloyd refinement); the restart
    with the lowest within-cluster sum of squares wins.  Deterministic given
    the seed."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    if clusters > n:
        raise ValueError(f"clusters ({clusters}) cannot exceed points ({n})")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    best_labels = None
    best_wcss = np.inf
    for _ in range(restarts):
        centers = _kmeanspp_centers(X, clusters, rng)
        labels, _, _, wcss = _lloyd(X, centers.copy())
        if wcss < best_wcss:
            best_wcss = wcss
            best_labels = labels
    return best_labels


def nmi(a, b) -> float:
    """Normalized mutual information with geometric-mean normalization.

    Conventions: 1.0 when both partitions have a single cluster, 0.0 when
    exactly one does.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1 or a.size < 1:
        raise ValueError("partitions must be equal-length 1-d sequences")
    n = a.size
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    ka = int(ia.max()) + 1
    kb = int(ib.max()) + 1
    joint = np.bincount(ia * kb + ib, minlength=ka * kb).reshape(ka, kb) / n
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    ha = -float(np.sum(pa[pa > 0] * np.log(pa[pa > 0])))
    hb = -float(np.sum(pb[pb > 0] * np.log(pb[pb > 0])))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    nz = joint > 0
    outer = pa[:, None] * pb[None, :]
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
    return float(min(max(mi / np.sqrt(ha * hb), 0.0), 1.0))


# ---------------------------------------------------------------------------
# node splits and one-vs-rest logistic classification
# ---------------------------------------------------------------------------

def train_test_split(nodes, train_ratio: float, seed: int, stratify=None):
    """Shuffle split with floor rounding and non-empty sides; when
    ``stratify`` (class per node) is given, the split is per class."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if not 0.0 < train_ratio < 1.0:
        raise ValueError("train_ratio must lie in (0, 1)")
    if nodes.size < 2:
        raise ValueError("need at least 2 nodes to split")
    rng = np.random.default_rng(seed)

    if stratify is None:
        perm = rng.permutation(nodes)
        cut = int(np.floor(train_ratio * nodes.size))
        cut = min(max(cut, 1), nodes.size - 1)
        return np.sort(perm[:cut]), np.sort(perm[cut:])

    stratify = np.asarray(stratify)
    train_parts = []
    test_parts = []
    for cls in np.unique(stratify):
        members = rng.permutation(nodes[stratify == cls])
        if members.size == 1:
            train_parts.append(members)
            continue
        cut = int(np.floor(train_ratio * members.size))
        cut = min(max(cut, 1), members.size - 1)
        train_parts.append(members[:cut])
        test_parts.append(members[cut:])
    train = np.sort(np.concatenate(train_parts)) if train_parts else np.empty(0, np.int64)
    test = np.sort(np.concatenate(test_parts)) if test_parts else np.empty(0, np.int64)
    if train.size == 0 or test.size == 0:
        raise ValueError("split produced an empty side")
    return train, test


def _logistic_loss(w, Xe, t, reg):
    z = Xe @ w
    data = float(np.mean(np.logaddexp(0.0, z) - t * z))
    return data + 0.5 * reg * float(np.dot(w[:-1], w[:-1]))


def _logistic_grad(w, Xe, t, reg):
    z = Xe @ w
    p = 1.0 / (1.0 + np.exp(-z))
    grad = Xe.T @ (p - t) / Xe.shape[0]
    grad[:-1] += reg * w[:-1]
    return grad


def _train_binary_logistic(Xe, t, reg, max_epochs=500, grad_tol=1e-6):
    w = np.zeros(Xe.shape[1])
    value = _logistic_loss(w, Xe, t, reg)
    for _ in range(max_epochs):
        grad = _logistic_grad(w, Xe, t, reg)
        gnorm2 = float(np.dot(grad, grad))
        if np.sqrt(gnorm2) < grad_tol:
            break
        step = 1.0
        while step > 1e-12:
            candidate = w - step * grad
            cand_value = _logistic_loss(candidate, Xe, t, reg)
            if cand_value <= value - 1e-4 * step * gnorm2:
                break
            step *= 0.5
        w = w - step * grad
        value = _logistic_loss(w, Xe, t, reg)
    return w


@dataclass
class OvrClassifier:
    """Independent binary logistic models, one per class (weights + bias)."""

    weights: np.ndarray
    bias: np.ndarray
    degenerate_classes: list = field(default_factory=list)

    def scores(self, X) -> np.ndarray:
        return X @ self.weights.T + self.bias

    def predict(self, X, label_counts=None) -> list[set[int]]:
        """Single-label: argmax.  Multi-label: top-t classes per node, where
        t is the node's known label count."""
        s = self.scores(X)
        if label_counts is None:
            return [{int(c)} for c in np.argmax(s, axis=1)]
        out = []
        for i, t in enumerate(label_counts):
            order = np.argsort(-s[i], kind="stable")
            out.append({int(c) for c in order[: int(t)]})
        return out


def train_ovr_classifier(
    X, y: LabelSet, train_ids, reg: float = 0.01, seed: int = 0
) -> OvrClassifier:
    """Full-batch gradient descent with backtracking, L2 on the weights.

    Classes absent (or universal) in the training rows get a constant model
    and are flagged in ``degenerate_classes``.  The seed is part of the
    interface for protocol bookkeeping; training itself is deterministic
    (zero initialization).
    """
    del seed
    train_ids = np.asarray(train_ids, dtype=np.int64)
    if train_ids.size == 0:
        raise ValueError("empty training set")
    Xt = np.asarray(X, dtype=np.float64)[train_ids]
    Xe = np.hstack([Xt, np.ones((Xt.shape[0], 1))])
    c = y.num_classes
    weights = np.zeros((c, Xt.shape[1]))
    bias = np.zeros(c)
    degenerate = []
    for cls in range(c):
        t = np.array([1.0 if cls in y.sets[i] else 0.0 for i in train_ids])
        rate = float(t.mean())
        if rate in (0.0, 1.0):
            degenerate.append(cls)
            p = min(max(rate, 1e-9), 1.0 - 1e-9)
            bias[cls] = float(np.log(p / (1.0 - p)))
            continue
        w = _train_binary_logistic(Xe, t, reg)
        weights[cls] = w[:-1]
        bias[cls] = w[-1]
    return OvrClassifier(weights=weights, bias=bias, degenerate_classes=degenerate)


def micro_macro_f1(pred: LabelSet, truth: LabelSet, test_ids) -> tuple[float, float]:
    """Micro F1 pools TP/FP/FN over classes; macro averages per-class F1,
    with 0/0 defined as 0."""
    test_ids = np.asarray(test_ids, dtype=np.int64)
    c = max(truth.num_classes, pred.num_classes)
    tp = np.zeros(c)
    fp = np.zeros(c)
    fn = np.zeros(c)
    for i in test_ids:
        p = pred.sets[i]
        t = truth.sets[i]
        for cls in p & t:
            tp[cls] += 1
        for cls in p - t:
            fp[cls] += 1
        for cls in t - p:
            fn[cls] += 1
    denom = 2 * tp + fp + fn
    micro_den = float(denom.sum())
    micro = float(2 * tp.sum() / micro_den) if micro_den > 0 else 0.0
    per_class = np.divide(2 * tp, denom, out=np.zeros(c), where=denom > 0)
    macro = float(per_class.mean()) if c else 0.0
    return micro, macro


# ---------------------------------------------------------------------------
# link prediction
# ---------------------------------------------------------------------------

def score_edge(V, u: int, v: int) -> float:
    """Inner product of the two embedding rows."""
    return float(np.dot(V[u], V[v]))


def sample_negative_edges(g: Graph, count: int, seed: int) -> np.ndarray:
    """Uniform unordered non-adjacent distinct pairs, no duplicates."""
    total = g.n * (g.n - 1) // 2
    available = total - g.num_edges
    if count > available:
        raise ValueError(f"requested {count} negative pairs, only {available} exist")
    rng = np.random.default_rng(seed)
    if count == 0:
        return np.empty((0, 2), dtype=np.int64)

    if count * 2 >= available:
        # dense regime: enumerate every non-edge and subsample
        mask = np.triu(np.ones((g.n, g.n), dtype=bool), k=1)
        rows = np.repeat(np.arange(g.n), np.diff(g.indptr))
        mask[rows, g.indices] = False
        cand_u, cand_v = np.nonzero(mask)
        pick = rng.choice(cand_u.shape[0], size=count, replace=False)
        return np.column_stack([cand_u[pick], cand_v[pick]]).astype(np.int64)

    chosen: set[tuple[int, int]] = set()
    out = np.empty((count, 2), dtype=np.int64)
    filled = 0
    while filled < count:
        batch = max(64, 2 * (count - filled))
        us = rng.integers(0, g.n, size=batch)
        vs = rng.integers(0, g.n, size=batch)
        for a, b in zip(us, vs):
            if a == b:
                continue
            pair = (int(min(a, b)), int(max(a, b)))
            if pair in chosen or g.has_edge(*pair):
                continue
            chosen.add(pair)
            out[filled] = pair
            filled += 1
            if filled == count:
                break
    return out


def auc(pos_scores, neg_scores) -> float:
    """Probability a random positive outranks a random negative; ties 0.5.
    Computed exactly from rank statistics."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("auc needs at least one positive and one negative score")
    ranks = rankdata(np.concatenate([pos, neg]))
    pos_rank_sum = float(ranks[: pos.size].sum())
    return (pos_rank_sum - pos.size * (pos.size + 1) / 2.0) / (pos.size * neg.size)


def common_neighbor_count(g: Graph, u: int, v: int) -> float:
    """|N(u) and N(v)|; the classical link-prediction heuristic."""
    return float(np.intersect1d(g.neighbors(u), g.neighbors(v)).size)


def dot_scorer(train: Graph, V, pairs) -> np.ndarray:
    return np.einsum("ij,ij->i", V[pairs[:, 0]], V[pairs[:, 1]])


def common_neighbor_scorer(train: Graph, V, pairs) -> np.ndarray:
    return np.array([common_neighbor_count(train, int(u), int(v)) for u, v in pairs])


def make_perfect_scorer(original: Graph):
    """Testing hook: scores 1 for pairs that are edges of the full graph."""

    def scorer(train, V, pairs):
        return np.array(
            [1.0 if original.has_edge(int(u), int(v)) else 0.0 for u, v in pairs]
        )

    return scorer


def make_random_scorer(seed: int):
    """Testing hook: scores pairs by a seeded hash, independent of the graph."""

    def scorer(train, V, pairs):
        rng = np.random.default_rng(seed)
        salt = rng.integers(1, 2**62)
        vals = (pairs[:, 0] * 2654435761 + pairs[:, 1] * 40503 + salt) % (2**31)
        return vals / 2**31

    return scorer


# ---------------------------------------------------------------------------
# protocol runners (deterministic seed derivation per repeat)
# ---------------------------------------------------------------------------

def run_cluster_protocol(
    X,
    truth: LabelSet,
    clusters: int | None = None,
    repeats: int = 10,
    restarts: int = 10,
    seed: int = 0,
) -> EvalReport:
    """K-means on the embedding, NMI against ground truth, averaged over
    re-seeded repeats."""
    ids = truth.labeled_ids()
    if ids.size == 0:
        raise ValueError("no labeled nodes")
    y = truth.as_array()[ids]
    if clusters is None:
        clusters = int(truth.num_classes)
    Xl = np.asarray(X, dtype=np.float64)[ids]
    per = []
    for r in range(repeats):
        labels = kmeans(Xl, clusters, restarts=restarts, seed=seed + r)
        per.append({"repeat": r, "nmi": nmi(labels, y)})
    mean_nmi = float(np.mean([p["nmi"] for p in per]))
    return EvalReport(
        task="cluster",
        params={"clusters": clusters, "restarts": restarts, "seed": seed},
        metrics={"nmi": mean_nmi},
        repeats=repeats,
        per_repeat=per,
    )


def run_classify_protocol(
    X,
    truth: LabelSet,
    train_ratio: float = 0.7,
    repeats: int = 10,
    reg: float = 0.01,
    seed: int = 0,
) -> EvalReport:
    """Split, train one-vs-rest logistic models, score micro/macro F1 on the
    held-out nodes; repeated with fresh splits and averaged."""
    ids = truth.labeled_ids()
    if ids.size < 2:
        raise ValueError("need at least 2 labeled nodes")
    X = np.asarray(X, dtype=np.float64)
    single = truth.single_label
    strat = truth.as_array()[ids] if single else None
    per = []
    for r in range(repeats):
        train_ids, test_ids = train_test_split(ids, train_ratio, seed + r, stratify=strat)
        if test_ids.size == 0:
            raise ValueError("split produced no test nodes")
        clf = train_ovr_classifier(X, truth, train_ids, reg=reg, seed=seed + r)
        counts = None if single else [len(truth.sets[i]) for i in test_ids]
        predicted = clf.predict(X[test_ids], label_counts=counts)
        pred_sets: list[set[int]] = [set() for _ in range(truth.n)]
        for i, s in zip(test_ids, predicted):
            pred_sets[i] = s
        pred = LabelSet(sets=pred_sets, num_classes=truth.num_classes)
        micro, macro = micro_macro_f1(pred, truth, test_ids)
        per.append({"repeat": r, "micro_f1": micro, "macro_f1": macro})
    return EvalReport(
        task="classify",
        params={"train_ratio": train_ratio, "reg": reg, "seed": seed},
        metrics={
            "micro_f1": float(np.mean([p["micro_f1"] for p in per])),
            "macro_f1": float(np.mean([p["macro_f1"] for p in per])),
        },
        repeats=repeats,
        per_repeat=per,
    )


def run_linkpred_protocol(
    g: Graph,
    fit_fn,
    fractions=(0.1,),
    repeats: int = 10,
    seed: int = 0,
    scorer=None,
    negative_ratio: float = 1.0,
) -> EvalReport:
    """For each hidden-edge fraction: split (connectivity preserved), refit on
    the train graph via ``fit_fn(train_graph, seed) -> V``, score held-out
    positives against sampled non-edges, average AUC over repeats."""
    if scorer is None:
        scorer = dot_scorer
    per = []
    metrics = {}
    for fi, fraction in enumerate(fractions):
        aucs = []
        for r in range(repeats):
            s = seed + 10_000 * fi + r
            split = remove_edges_keep_connected(g, fraction, s)
            if split.held_out.shape[0] == 0:
                raise ValueError(
                    f"fraction {fraction} holds out no edges (|E|={g.num_edges})"
                )
            V = fit_fn(split.train, s)
            n_neg = max(1, int(round(negative_ratio * split.held_out.shape[0])))
            negatives = sample_negative_edges(g, n_neg, s + 500_000)
            pos = scorer(split.train, V, split.held_out)
            neg = scorer(split.train, V, negatives)
            value = auc(pos, neg)
            aucs.append(value)
            per.append({"fraction": fraction, "repeat": r, "auc": value})
        metrics[f"auc@{fraction:g}"] = float(np.mean(aucs))
    return EvalReport(
        task="linkpred",
        params={
            "fractions": list(fractions),
            "negative_ratio": negative_ratio,
            "seed": seed,
        },
        metrics=metrics,
        repeats=repeats,
        per_repeat=per,
    )
