"""Multi-output least-squares regression trees on histogram-binned features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DataError, ValidationError

# Gains below this fraction of the node's sum of squared targets are rounding noise.
GAIN_REL_TOL = 1e-13


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 6
    min_rows_per_leaf: int = 1
    max_bins: int = 255

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValidationError("max_depth must be >= 0")
        if self.min_rows_per_leaf < 1:
            raise ValidationError("min_rows_per_leaf must be >= 1")
        if not 2 <= self.max_bins <= 65535:
            raise ValidationError("max_bins must lie in [2, 65535]")


def feature_thresholds(column: np.ndarray, max_bins: int) -> np.ndarray:
    """Candidate split thresholds for one feature.

    Thresholds sit at midpoints between adjacent distinct values. When there
    are more than ``max_bins`` distinct values, only the midpoints following
    the ``k / max_bins`` quantiles of the rows are kept.
    """
    srt = np.sort(np.asarray(column, dtype=np.float64))
    distinct, first = np.unique(srt, return_index=True)
    if len(distinct) < 2:
        return np.empty(0)
    if len(distinct) <= max_bins:
        lower = distinct[:-1]
    else:
        n = len(srt)
        ranks = (np.arange(1, max_bins) * n) // max_bins
        # index of the distinct value at each quantile rank
        pos = np.searchsorted(first, ranks, side="right") - 1
        pos = np.unique(pos[pos < len(distinct) - 1])
        lower = distinct[pos]
    upper = distinct[np.searchsorted(distinct, lower) + 1]
    mids = lower + (upper - lower) / 2
    # the midpoint of two adjacent doubles may round up onto the upper value
    mids = np.where(mids >= upper, lower, mids)
    return mids


@dataclass(frozen=True, eq=False)
class BinnedMatrix:
    """Features mapped to bin indices; ``bin <= b`` iff ``x <= thresholds[f][b]``."""

    bins: np.ndarray
    thresholds: tuple
    n_bins: np.ndarray

    @property
    def max_bin(self) -> int:
        return int(self.n_bins.max()) if len(self.n_bins) else 1

    @classmethod
    def fit(cls, X: np.ndarray, max_bins: int = 255) -> "BinnedMatrix":
        X = np.asarray(X, dtype=np.float64)
        thresholds = tuple(feature_thresholds(X[:, f], max_bins) for f in range(X.shape[1]))
        return cls._build(X, thresholds)

    @classmethod
    def _build(cls, X, thresholds):
        bins = np.empty(X.shape, dtype=np.uint16)
        for f, thr in enumerate(thresholds):
            bins[:, f] = np.searchsorted(thr, X[:, f], side="left")
        n_bins = np.array([len(t) + 1 for t in thresholds], dtype=np.int64)
        return cls(np.ascontiguousarray(bins), thresholds, n_bins)


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Binary tree in flat arrays; ``feature[i] == -1`` marks a leaf.

    Rows go left iff ``x[feature] <= threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    n_features: int

    @property
    def d_out(self) -> int:
        return self.value.shape[1]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def leaves(self) -> np.ndarray:
        return np.nonzero(self.feature < 0)[0]

    def depth(self) -> int:
        def walk(node):
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))

        return walk(0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Index of the leaf each row lands in."""
        X = _as_matrix(X, self.n_features)
        return _kernels.route(X, self.feature, self.threshold, self.left, self.right)

    def to_preorder(self) -> list:
        """Nodes in preorder: ``[feature, threshold]`` or ``{"leaf": [...], "n": count}``."""
        out = []
        stack = [0]
        while stack:
            node = stack.pop()
            if self.feature[node] < 0:
                out.append({"leaf": [float(v) for v in self.value[node]], "n": int(self.count[node])})
            else:
                out.append([int(self.feature[node]), float(self.threshold[node])])
                stack.append(self.right[node])
                stack.append(self.left[node])
        return out

    @classmethod
    def from_preorder(cls, nodes: list, n_features: int, d_out: int) -> "DecisionTree":
        feature, threshold, left, right, value, count = [], [], [], [], [], []
        pos = 0

        def build():
            nonlocal pos
            entry = nodes[pos]
            pos += 1
            idx = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            if isinstance(entry, dict):
                value.append([float(v) for v in entry["leaf"]])
                count.append(int(entry.get("n", 0)))
                return idx
            value.append([0.0] * d_out)
            count.append(0)
            feature[idx] = int(entry[0])
            threshold[idx] = float(entry[1])
            left[idx] = build()
            right[idx] = build()
            count[idx] = count[left[idx]] + count[right[idx]]
            return idx

        build()
        if pos != len(nodes):
            raise DataError("trailing nodes in serialized tree")
        return cls(
            np.array(feature, dtype=np.int32),
            np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int32),
            np.array(right, dtype=np.int32),
            np.array(value, dtype=np.float64).reshape(-1, d_out),
            np.array(count, dtype=np.int64),
            n_features,
        )


def _as_matrix(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise DataError(f"expected rows with {n_features} features, got shape {X.shape}")
    return np.ascontiguousarray(X)


def fit_binned(binned: BinnedMatrix, targets: np.ndarray, rows: np.ndarray, params: TreeParams):
    """Fit on pre-binned rows; returns the tree and the leaf of each fitted row.

    ``targets`` is aligned with ``rows``.
    """
    if len(rows) == 0:
        raise ValidationError("cannot fit a tree on an empty row set")
    if len(rows) < params.min_rows_per_leaf:
        raise ValidationError("row set smaller than min_rows_per_leaf")
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets.reshape(-1, 1)
    if not np.all(np.isfinite(targets)):
        raise ValidationError("targets must be finite")
    feature, split_bin, left, right, value, count, leaf_of_row = _kernels.grow_tree(
        binned.bins,
        np.ascontiguousarray(rows, dtype=np.int64),
        targets,
        binned.n_bins,
        binned.max_bin,
        params.max_depth,
        params.min_rows_per_leaf,
        GAIN_REL_TOL,
    )
    threshold = np.zeros(len(feature))
    for node in np.nonzero(feature >= 0)[0]:
        threshold[node] = binned.thresholds[feature[node]][split_bin[node]]
    tree = DecisionTree(feature, threshold, left, right, value, count, binned.bins.shape[1])
    return tree, leaf_of_row, split_bin


def fit_tree(X, targets, row_set=None, params: TreeParams = TreeParams(), binned: BinnedMatrix | None = None) -> DecisionTree:
    """Least-squares tree for ``targets`` (n x d_out) on the rows in ``row_set``.

    Thresholds come from ``binned`` if given, otherwise from quantile bins of
    the rows being fitted.
    """
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets.reshape(-1, 1)
    if targets.shape[0] != X.shape[0]:
        raise DataError("targets and X have different row counts")
    rows = np.arange(X.shape[0]) if row_set is None else np.asarray(row_set, dtype=np.int64)
    if binned is None:
        if len(rows) == 0:
            raise ValidationError("cannot fit a tree on an empty row set")
        binned = BinnedMatrix._build(
            X, tuple(feature_thresholds(X[rows, f], params.max_bins) for f in range(X.shape[1]))
        )
    tree, _, _ = fit_binned(binned, targets[rows], rows, params)
    return tree


def predict_tree(tree: DecisionTree, x) -> np.ndarray:
    """Leaf value for a row (shape ``(d_out,)``) or for each row of a matrix."""
    single = np.ndim(x) == 1
    leaves = tree.apply(x)
    out = tree.value[leaves]
    return out[0] if single else out
