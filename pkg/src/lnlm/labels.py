"""Per-node class labels, single- or multi-label, with text-file IO."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LabelSet:
    """Label assignment for n nodes.

    ``sets[i]`` is the set of class ids for node i; an empty set marks an
    unlabeled node.  ``num_classes`` is the class-id range bound c (ids live
    in [0, c)).  Single-label mode means every labeled node carries exactly
    one class id.
    """

    sets: list[set[int]]
    num_classes: int

    def __post_init__(self):
        for i, s in enumerate(self.sets):
            for c in s:
                if not 0 <= c < self.num_classes:
                    raise ValueError(
                        f"node {i}: class id {c} outside [0, {self.num_classes})"
                    )

    @property
    def n(self) -> int:
        return len(self.sets)

    @property
    def single_label(self) -> bool:
        return all(len(s) == 1 for s in self.sets if s)

    def labeled_ids(self) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.sets) if s], dtype=np.int64)

    def as_array(self) -> np.ndarray:
        """Single-label view: class id per node, -1 for unlabeled."""
        out = np.full(self.n, -1, dtype=np.int64)
        for i, s in enumerate(self.sets):
            if len(s) > 1:
                raise ValueError("as_array requires single-label data")
            if s:
                out[i] = next(iter(s))
        return out

    @staticmethod
    def from_array(y) -> "LabelSet":
        y = np.asarray(y, dtype=np.int64)
        sets = [{int(c)} if c >= 0 else set() for c in y]
        top = int(y.max()) + 1 if y.size and y.max() >= 0 else 0
        return LabelSet(sets=sets, num_classes=top)


def load_labels(path, node_ids, num_nodes: int) -> LabelSet:
    """Read ``node_id label[,label...]`` lines keyed by original node ids.

    ``node_ids`` is the Graph's original-id array; label lines referring to
    unknown nodes raise.  Nodes without a line stay unlabeled.
    """
    lookup = {int(orig): i for i, orig in enumerate(node_ids)}
    sets: list[set[int]] = [set() for _ in range(num_nodes)]
    top = -1
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ValueError(f"label file line {line_no}: expected 'node labels'")
            try:
                node = int(parts[0])
                classes = [int(tok) for tok in parts[1].split(",")]
            except ValueError as exc:
                raise ValueError(f"label file line {line_no}: bad integer") from exc
            if node not in lookup:
                raise ValueError(
                    f"label file line {line_no}: node {node} not present in graph"
                )
            if any(c < 0 for c in classes):
                raise ValueError(f"label file line {line_no}: negative class id")
            sets[lookup[node]].update(classes)
            top = max(top, max(classes))
    return LabelSet(sets=sets, num_classes=top + 1)


def save_labels(labels: LabelSet, node_ids, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, s in enumerate(labels.sets):
            if s:
                fh.write("%d %s\n" % (node_ids[i], ",".join(str(c) for c in sorted(s))))
