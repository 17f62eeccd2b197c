"""Least-squares regression trees grown leaf-wise with exact greedy splits.

A node's best split is found by sorting every candidate column once and
scanning prefix sums, so the gain of each threshold is the reduction in the
sum of squared errors::

    gain = S_L**2 / n_L + S_R**2 / n_R - S**2 / n

Leaves are expanded best-gain first until ``max_leaves`` is reached, as in
LightGBM. Rows go left when ``x[feature] <= threshold``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


@dataclass
class Tree:
    """Flat array representation; ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=int)
        active = self.feature[node] >= 0
        while np.any(active):
            rows = np.nonzero(active)[0]
            n = node[rows]
            go_left = X[rows, self.feature[n]] <= self.threshold[n]
            node[rows] = np.where(go_left, self.left[n], self.right[n])
            active[rows] = self.feature[node[rows]] >= 0
        return self.value[node]

    def predict_one(self, x: Sequence[float]) -> float:
        """Walk a single path; used to cross-check the vectorized evaluator."""
        i = 0
        while self.feature[i] >= 0:
            i = self.left[i] if x[self.feature[i]] <= self.threshold[i] else self.right[i]
        return float(self.value[i])

    def to_dict(self) -> Dict[str, list]:
        nodes = []
        for i in range(len(self.feature)):
            if self.feature[i] < 0:
                nodes.append({"leaf": float(self.value[i])})
            else:
                nodes.append({"feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                              "left": int(self.left[i]), "right": int(self.right[i]),
                              "value": float(self.value[i])})
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d: Dict[str, list]) -> "Tree":
        nodes = d["nodes"]
        n = len(nodes)
        feature = np.full(n, -1, dtype=int)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=int)
        right = np.full(n, -1, dtype=int)
        value = np.zeros(n)
        for i, nd in enumerate(nodes):
            if "leaf" in nd:
                value[i] = nd["leaf"]
            else:
                feature[i], threshold[i] = nd["feature"], nd["threshold"]
                left[i], right[i], value[i] = nd["left"], nd["right"], nd["value"]
        return cls(feature, threshold, left, right, value)

    @classmethod
    def constant(cls, value: float) -> "Tree":
        return cls(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]), np.array([float(value)]))


@dataclass(frozen=True)
class _Split:
    gain: float
    feature: int
    threshold: float
    left_rows: np.ndarray
    right_rows: np.ndarray


def best_split(X: np.ndarray, y: np.ndarray, rows: np.ndarray, columns: np.ndarray,
               min_samples_leaf: int) -> Optional[_Split]:
    """Highest-gain split of ``rows`` over ``columns``; ties go to the lower column, then lower threshold."""
    n = len(rows)
    if n < 2 * min_samples_leaf or n < 2:
        return None
    sub = X[np.ix_(rows, columns)]
    varying = sub.max(axis=0) > sub.min(axis=0)
    if not np.any(varying):
        return None
    columns = columns[varying]
    sub = sub[:, varying]
    yr = y[rows]

    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    ys = yr[order]
    csum = np.cumsum(ys, axis=0)[:-1]
    total = float(np.sum(yr))
    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    gain = csum ** 2 / n_left + (total - csum) ** 2 / n_right - total ** 2 / n

    valid = xs[:-1] < xs[1:]
    valid[: min_samples_leaf - 1] = False
    if min_samples_leaf > 1:
        valid[n - min_samples_leaf:] = False
    gain = np.where(valid, gain, -np.inf)

    # transpose so that argmax scans column-major: lowest column wins ties
    flat = gain.T.ravel()
    k = int(np.argmax(flat))
    g = float(flat[k])
    tol = 1e-12 * (float(np.sum(yr ** 2)) + 1e-300)
    if not np.isfinite(g) or g <= tol:
        return None
    c, pos = divmod(k, n - 1)
    lo, hi = float(xs[pos, c]), float(xs[pos + 1, c])
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    feat = int(columns[c])
    mask = X[rows, feat] <= thr
    return _Split(g, feat, thr, rows[mask], rows[~mask])


def fit_tree(X: np.ndarray, y: np.ndarray, rows: Optional[np.ndarray] = None,
             columns: Optional[np.ndarray] = None, max_leaves: int = 31, max_depth: int = 8,
             min_samples_leaf: int = 1) -> Tuple[Tree, np.ndarray]:
    """Fit one tree; returns it with the split gain accumulated per column of ``X``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rows = np.arange(len(X)) if rows is None else np.asarray(rows)
    columns = np.arange(X.shape[1]) if columns is None else np.asarray(columns)
    gains = np.zeros(X.shape[1])

    feature: List[int] = [-1]
    threshold: List[float] = [0.0]
    left: List[int] = [-1]
    right: List[int] = [-1]
    value: List[float] = [float(np.mean(y[rows])) if len(rows) else 0.0]
    depth = [0]

    heap: list = []

    def push(node: int, node_rows: np.ndarray):
        if depth[node] >= max_depth:
            return
        s = best_split(X, y, node_rows, columns, min_samples_leaf)
        if s is not None:
            heapq.heappush(heap, (-s.gain, node, s))

    push(0, rows)
    n_leaves = 1
    while heap and n_leaves < max_leaves:
        _, node, s = heapq.heappop(heap)
        gains[s.feature] += s.gain
        feature[node], threshold[node] = s.feature, s.threshold
        for child_rows, side in ((s.left_rows, left), (s.right_rows, right)):
            idx = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(np.mean(y[child_rows])))
            depth.append(depth[node] + 1)
            side[node] = idx
            push(idx, child_rows)
        n_leaves += 1

    tree = Tree(np.array(feature, dtype=int), np.array(threshold), np.array(left, dtype=int),
                np.array(right, dtype=int), np.array(value))
    return tree, gains
