"""Depth-limited least-squares regression trees.

Splits maximize the decrease in sum of squared errors; thresholds sit at the
midpoint between consecutive distinct feature values and a sample goes left
iff ``x[feature] <= threshold``. Ties between equally good splits go to the
lowest feature index, then the smallest threshold.

Nodes are stored in preorder as parallel arrays; leaves have
``feature == -1`` and ``left == right == -1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

LEAF = -1
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int = field(default=1)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == LEAF

    @property
    def leaf_count(self) -> int:
        return int(np.sum(self.is_leaf))

    @property
    def leaves(self) -> np.ndarray:
        """Node ids of the leaves, in preorder."""
        return np.flatnonzero(self.is_leaf)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):  # preorder: parents come first
            if not self.is_leaf[i]:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        """Leaf node id reached by every row of ``X``."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        inner = ~self.is_leaf[node]
        while np.any(inner):
            r, nd = rows[inner], node[inner]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            inner = ~self.is_leaf[node]
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def with_values(self, value) -> "RegressionTree":
        """Same partition, new node values (only leaf entries matter)."""
        value = np.asarray(value, dtype=float)
        if value.shape != self.value.shape:
            raise ValueError("value array must have one entry per node")
        return RegressionTree(self.feature, self.threshold, self.left, self.right,
                              value, self.max_depth)

    def scaled(self, c: float) -> "RegressionTree":
        return self.with_values(self.value * c)

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.is_leaf[i]:
                nodes.append({"value": float(self.value[i])})
            else:
                nodes.append({"feature": int(self.feature[i]),
                              "threshold": float(self.threshold[i]),
                              "left": int(self.left[i]), "right": int(self.right[i])})
        return {"max_depth": self.max_depth, "nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        nodes = d["nodes"]
        feature = np.array([n.get("feature", LEAF) for n in nodes], dtype=int)
        threshold = np.array([n.get("threshold", 0.0) for n in nodes], dtype=float)
        left = np.array([n.get("left", LEAF) for n in nodes], dtype=int)
        right = np.array([n.get("right", LEAF) for n in nodes], dtype=int)
        value = np.array([n.get("value", 0.0) for n in nodes], dtype=float)
        return cls(feature, threshold, left, right, value, int(d["max_depth"]))

    @classmethod
    def constant(cls, value: float, max_depth: int = 1) -> "RegressionTree":
        return cls(np.array([LEAF]), np.array([0.0]), np.array([LEAF]), np.array([LEAF]),
                   np.array([float(value)]), max_depth)


def presort(X) -> np.ndarray:
    """Column-wise stable argsort, reusable across fits on the same ``X``."""
    return np.argsort(np.asarray(X, dtype=float), axis=0, kind="stable")


def _best_split(X, r, order, mask, min_leaf):
    """Best (feature, threshold, gain) for the samples in ``mask``."""
    m = int(mask.sum())
    d = X.shape[1]
    # rows of each column of `order` restricted to the node, still sorted
    idx = order.T[mask[order.T]].reshape(d, m)
    xs = X[idx, np.arange(d)[:, None]]
    rs = r[idx]
    csum = np.cumsum(rs, axis=1)
    total = csum[:, -1:]
    n_left = np.arange(1, m)
    s_left = csum[:, :-1]
    s_right = total - s_left
    gain = s_left ** 2 / n_left + s_right ** 2 / (m - n_left) - total ** 2 / m
    valid = (xs[:, :-1] < xs[:, 1:]) & (n_left >= min_leaf) & (m - n_left >= min_leaf)
    gain = np.where(valid, gain, -np.inf)
    best = gain.max()
    if not np.isfinite(best) or best <= 0:
        return None
    # gains equal up to rounding are ties; the first one in row-major order
    # has the lowest feature, then the smallest threshold
    flat = int(np.argmax(gain >= best * (1.0 - TIE_RTOL)))
    j, k = divmod(flat, m - 1)
    return j, 0.5 * (xs[j, k] + xs[j, k + 1]), gain[j, k]


def fit_tree(X, residual, max_depth: int, min_samples_leaf: int = 1,
             order: np.ndarray | None = None) -> RegressionTree:
    """Greedy least-squares tree fit of ``residual`` on the rows of ``X``.

    ``order`` may carry :func:`presort` of ``X`` to skip re-sorting when the
    same design is fitted repeatedly (as in boosting).
    """
    X = np.asarray(X, dtype=float)
    r = np.asarray(residual, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise DataError("fit_tree needs a non-empty 2-D feature matrix")
    if r.shape != (X.shape[0],):
        raise DataError("residual length must match the number of rows")
    if max_depth < 1 or min_samples_leaf < 1:
        raise ValueError("max_depth and min_samples_leaf must be >= 1")
    if order is None:
        order = presort(X)

    feature, threshold, left, right, value = [], [], [], [], []

    def grow(mask, depth):
        node = len(feature)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        rn = r[mask]
        value.append(float(np.mean(rn)))
        if depth >= max_depth or rn.size < 2 * min_samples_leaf or np.ptp(rn) == 0:
            return node
        split = _best_split(X, r, order, mask, min_samples_leaf)
        if split is None:
            return node
        j, thr, _ = split
        go_left = mask & (X[:, j] <= thr)
        feature[node], threshold[node] = j, thr
        left[node] = grow(go_left, depth + 1)
        right[node] = grow(mask & ~go_left, depth + 1)
        return node

    grow(np.ones(X.shape[0], dtype=bool), 0)
    return RegressionTree(np.array(feature, dtype=int), np.array(threshold, dtype=float),
                          np.array(left, dtype=int), np.array(right, dtype=int),
                          np.array(value, dtype=float), max_depth)
