"""Undirected weighted graphs in CSR form: loading, validation, edge splits."""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels


class EdgeListError(ValueError):
    """Malformed edge-list input (message carries the offending line number)."""


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph with contiguous integer node ids.

    Edges are stored once in canonical form (u < v) plus a symmetric CSR
    adjacency for fast row access.  ``node_ids[i]`` is the original id of
    internal node i; loads remap ids to a dense 0..n-1 range.
    """

    n: int
    edges_u: np.ndarray
    edges_v: np.ndarray
    edges_w: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    node_ids: np.ndarray
    weighted: bool = False

    @property
    def num_edges(self) -> int:
        return int(self.edges_u.shape[0])

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def neighbor_weights(self, u: int) -> np.ndarray:
        return self.weights[self.indptr[u]:self.indptr[u + 1]]

    def adjacency_weight(self, u: int, v: int) -> float:
        """Weight of edge (u, v), 0.0 if absent."""
        row = self.neighbors(u)
        pos = np.searchsorted(row, v)
        if pos < row.shape[0] and row[pos] == v:
            return float(self.neighbor_weights(u)[pos])
        return 0.0

    def has_edge(self, u: int, v: int) -> bool:
        return self.adjacency_weight(u, v) > 0.0

    def dense_adjacency(self) -> np.ndarray:
        """Materialize A as a dense n x n array (tests and small graphs only)."""
        A = np.zeros((self.n, self.n))
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        A[rows, self.indices] = self.weights
        return A


def from_edge_arrays(
    n: int,
    u,
    v,
    w=None,
    node_ids=None,
    weighted: bool = False,
) -> Graph:
    """Build a Graph from parallel edge arrays.

    Duplicate edges (in either orientation) are merged by weight summation;
    self-loops must already have been removed by the caller.
    """
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    if w is None:
        w = np.ones(u.shape[0])
    w = np.asarray(w, dtype=np.float64)
    if u.shape != v.shape or u.shape != w.shape:
        raise ValueError("edge arrays must have equal length")
    if u.size and (u.min() < 0 or max(u.max(), v.max()) >= n):
        raise ValueError("edge endpoint outside 0..n-1")
    if np.any(u == v):
        raise ValueError("self-loops not allowed")
    if np.any(w <= 0):
        raise ValueError("edge weights must be strictly positive")

    lo = np.minimum(u, v)
    hi = np.maximum(u, v)
    key = lo * np.int64(n) + hi
    uniq, inverse = np.unique(key, return_inverse=True)
    merged_w = np.bincount(inverse, weights=w, minlength=uniq.shape[0])
    eu = (uniq // n).astype(np.int64)
    ev = (uniq % n).astype(np.int64)

    # symmetric CSR
    rows = np.concatenate([eu, ev])
    cols = np.concatenate([ev, eu])
    vals = np.concatenate([merged_w, merged_w])
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)

    if node_ids is None:
        node_ids = np.arange(n, dtype=np.int64)
    else:
        node_ids = np.asarray(node_ids, dtype=np.int64)
        if node_ids.shape[0] != n:
            raise ValueError("node_ids must have length n")

    return Graph(
        n=int(n),
        edges_u=eu,
        edges_v=ev,
        edges_w=merged_w,
        indptr=indptr,
        indices=cols,
        weights=vals,
        node_ids=node_ids,
        weighted=bool(weighted),
    )


def _iter_lines(source):
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            yield from enumerate(fh, start=1)
        return
    if isinstance(source, (bytes, bytearray)):
        yield from enumerate(io.BytesIO(bytes(source)), start=1)
        return
    yield from enumerate(source, start=1)


def load_edge_list(source, weighted: bool = False) -> Graph:
    """Parse an edge list: one ``u v [w]`` per line, ``#`` comments ignored.

    Node ids are remapped to 0..n-1 in order of first appearance (the map is
    kept in ``Graph.node_ids``); duplicate edges merge by weight summation;
    self-loops are dropped with a counted warning.

    Args:
        source: path, bytes, or an iterable of lines (text or bytes).
        weighted: read the optional third column as a positive edge weight;
            when False any third column is ignored and all weights are 1.
    """
    id_map: dict[int, int] = {}
    us: list[int] = []
    vs: list[int] = []
    ws: list[float] = []
    self_loops = 0

    for line_no, raw in _iter_lines(source):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8", errors="replace")
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) not in (2, 3):
            raise EdgeListError(
                f"line {line_no}: expected 'u v [w]', got {len(tokens)} tokens"
            )
        try:
            a = int(tokens[0])
            b = int(tokens[1])
        except ValueError as exc:
            raise EdgeListError(f"line {line_no}: non-integer node id") from exc
        weight = 1.0
        if weighted and len(tokens) == 3:
            try:
                weight = float(tokens[2])
            except ValueError as exc:
                raise EdgeListError(f"line {line_no}: bad weight {tokens[2]!r}") from exc
            if not np.isfinite(weight) or weight <= 0.0:
                raise EdgeListError(
                    f"line {line_no}: weight must be a positive finite number"
                )
        if a == b:
            self_loops += 1
            continue
        for node in (a, b):
            if node not in id_map:
                id_map[node] = len(id_map)
        us.append(id_map[a])
        vs.append(id_map[b])
        ws.append(weight)

    if not us:
        raise EdgeListError("edge list contains no edges")
    if self_loops:
        warnings.warn(f"dropped {self_loops} self-loop(s) at load", stacklevel=2)

    node_ids = np.empty(len(id_map), dtype=np.int64)
    for orig, internal in id_map.items():
        node_ids[internal] = orig
    return from_edge_arrays(
        len(id_map), us, vs, ws, node_ids=node_ids, weighted=weighted
    )


def save_edge_list(g: Graph, path) -> None:
    """Write the canonical edge-list format (original node ids, one edge per line)."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(g.num_edges):
            a = g.node_ids[g.edges_u[i]]
            b = g.node_ids[g.edges_v[i]]
            if g.weighted:
                fh.write("%d %d %.17g\n" % (a, b, g.edges_w[i]))
            else:
                fh.write("%d %d\n" % (a, b))


def save_node_map(g: Graph, path) -> None:
    """Two-column sidecar: internal id, original id."""
    with open(path, "w", encoding="utf-8") as fh:
        for internal, orig in enumerate(g.node_ids):
            fh.write("%d %d\n" % (internal, orig))


def volume(g: Graph) -> float:
    """sum_ij A_ij; each undirected edge counts twice."""
    return float(g.weights.sum())


def degrees(g: Graph) -> np.ndarray:
    """Weighted degree d_i = row sum of A."""
    rows = np.repeat(np.arange(g.n), np.diff(g.indptr))
    return np.bincount(rows, weights=g.weights, minlength=g.n)


def connected_components(g: Graph) -> list[np.ndarray]:
    """Partition of 0..n-1 by reachability, as sorted node-id arrays."""
    seen = np.zeros(g.n, dtype=bool)
    comps = []
    for start in range(g.n):
        if seen[start]:
            continue
        seen[start] = True
        members = [np.array([start], dtype=np.int64)]
        frontier = members[0]
        while frontier.size:
            nbr_chunks = [
                g.indices[g.indptr[u]:g.indptr[u + 1]] for u in frontier
            ]
            nbrs = np.unique(np.concatenate(nbr_chunks)) if nbr_chunks else np.empty(0, np.int64)
            new = nbrs[~seen[nbrs]]
            seen[new] = True
            if new.size:
                members.append(new)
            frontier = new
        comps.append(np.sort(np.concatenate(members)))
    return comps


def is_connected(g: Graph) -> bool:
    return len(connected_components(g)) == 1


def subgraph(g: Graph, nodes) -> Graph:
    """Induced subgraph on ``nodes``; original ids are carried through."""
    nodes = np.sort(np.asarray(nodes, dtype=np.int64))
    relabel = np.full(g.n, -1, dtype=np.int64)
    relabel[nodes] = np.arange(nodes.shape[0])
    keep = (relabel[g.edges_u] >= 0) & (relabel[g.edges_v] >= 0)
    return from_edge_arrays(
        nodes.shape[0],
        relabel[g.edges_u[keep]],
        relabel[g.edges_v[keep]],
        g.edges_w[keep],
        node_ids=g.node_ids[nodes],
        weighted=g.weighted,
    )


def largest_component(g: Graph) -> Graph:
    comps = connected_components(g)
    biggest = max(comps, key=len)
    return subgraph(g, biggest)


@dataclass(frozen=True)
class EdgeSplit:
    """Train graph plus held-out edges from a connectivity-preserving split."""

    train: Graph
    held_out: np.ndarray  # (k, 2) internal node-id pairs
    fraction: float
    requested: int
    achieved_fraction: float = field(default=0.0)


def _spanning_tree_edges(g: Graph) -> set[int]:
    """Indices (into the canonical edge arrays) of one BFS spanning tree."""
    edge_index = {
        (int(a), int(b)): i
        for i, (a, b) in enumerate(zip(g.edges_u, g.edges_v))
    }
    tree: set[int] = set()
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in g.neighbors(u):
                v = int(v)
                if not seen[v]:
                    seen[v] = True
                    tree.add(edge_index[(min(u, v), max(u, v))])
                    nxt.append(v)
        frontier = nxt
    return tree


def remove_edges_keep_connected(g: Graph, fraction: float, rng_seed: int) -> EdgeSplit:
    """Hold out floor(fraction * |E|) edges while keeping the rest connected.

    One spanning tree is protected; held-out edges are drawn uniformly at
    random (without replacement) from the non-tree edges, so the train graph
    stays connected by construction.  If fewer non-tree edges exist than
    requested, the achieved fraction is reported and a warning is issued.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    if not is_connected(g):
        raise ValueError("edge removal requires a connected graph")

    tree = _spanning_tree_edges(g)
    removable = np.array(
        [i for i in range(g.num_edges) if i not in tree], dtype=np.int64
    )
    requested = int(np.floor(fraction * g.num_edges))
    take = min(requested, removable.shape[0])
    rng = np.random.default_rng(rng_seed)
    chosen = rng.permutation(removable)[:take] if take else np.empty(0, np.int64)

    held = np.column_stack([g.edges_u[chosen], g.edges_v[chosen]]) if take else np.empty((0, 2), np.int64)
    mask = np.ones(g.num_edges, dtype=bool)
    mask[chosen] = False
    train = from_edge_arrays(
        g.n,
        g.edges_u[mask],
        g.edges_v[mask],
        g.edges_w[mask],
        node_ids=g.node_ids,
        weighted=g.weighted,
    )
    achieved = take / g.num_edges if g.num_edges else 0.0
    if take < requested:
        warnings.warn(
            f"only {take} of {requested} requested edges were removable "
            f"(achieved fraction {achieved:.4f})",
            stacklevel=2,
        )
    return EdgeSplit(
        train=train,
        held_out=held,
        fraction=float(fraction),
        requested=requested,
        achieved_fraction=achieved,
    )


def csr_matvec(g: Graph, X: np.ndarray) -> np.ndarray:
    """A @ X using the CSR adjacency (numba kernel when enabled)."""
    return _kernels.csr_matmul(g.indptr, g.indices, g.weights, X)
