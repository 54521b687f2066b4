"""K-nearest-neighbor regression with exact, deterministic neighbor selection.

Predictions are unweighted means of the targets of the min(k, size) nearest
points under Euclidean distance. Ties are broken by ascending insertion index,
and neighbor rows are always reported in canonical (distance, index) order so
that any two code paths produce bitwise-identical results. Models below
`BRUTE_FORCE_MIN` points use a vectorized linear scan; larger models are
accelerated by a kd-tree (scipy) whose output is post-processed to the same
tie rule.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

BRUTE_FORCE_MIN = 64  # smallest model size that gets a kd-tree
_CHUNK = 1 << 16

_default_workers = -1


def set_query_workers(n: int) -> None:
    """Thread count for kd-tree queries (-1 = all cores). Parallel experiment
    workers set this to 1 to avoid oversubscription."""
    global _default_workers
    _default_workers = n


class KnnModel:
    """Immutable KNN regressor over (feature vector, scalar target) pairs."""

    __slots__ = ("points", "targets", "k", "_tree")

    def __init__(self, points: np.ndarray, targets: np.ndarray, k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        points = np.ascontiguousarray(points, dtype=np.float64)
        targets = np.asarray(targets, dtype=np.float64)
        if points.size == 0:
            points = points.reshape(0, points.shape[1] if points.ndim == 2 else 0)
        if points.ndim != 2:
            raise ValueError("points must be a 2-D array")
        if points.shape[0] != targets.shape[0]:
            raise ValueError("points and targets length mismatch")
        if points.shape[0] > 0 and points.shape[1] == 0:
            raise ValueError("feature dimension must be positive")
        if not np.all(np.isfinite(points)) or not np.all(np.isfinite(targets)):
            raise ValueError("points and targets must be finite")
        self.points = points
        self.targets = targets
        self.k = int(k)
        self._tree = cKDTree(points) if points.shape[0] >= BRUTE_FORCE_MIN else None

    @classmethod
    def empty(cls, k: int = 1) -> "KnnModel":
        return cls(np.empty((0, 0)), np.empty(0), k)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def _check_queries(self, x) -> np.ndarray:
        X = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.size > 0 and X.shape[1] != self.dimension:
            raise ValueError(f"query dimension {X.shape[1]} != model dimension {self.dimension}")
        return X

    def neighbor_indices(self, x, k: int | None = None) -> np.ndarray:
        """Indices of the min(k, size) nearest points per query row, each row in
        ascending (distance, insertion index) order. Shape (m, keff)."""
        X = self._check_queries(x)
        k = self.k if k is None else int(k)
        n = self.size
        keff = min(k, n)
        if keff == 0:
            return np.empty((X.shape[0], 0), dtype=np.intp)
        scan = self._tree is None or keff == n
        step = max(1, min(_CHUNK, (1 << 24) // n)) if scan else _CHUNK
        out = np.empty((X.shape[0], keff), dtype=np.intp)
        for lo in range(0, X.shape[0], step):
            chunk = X[lo : lo + step]
            if scan:
                out[lo : lo + step] = self._neighbors_scan(chunk, keff)
            else:
                out[lo : lo + step] = self._neighbors_tree(chunk, keff)
        return out

    def _neighbors_scan(self, X: np.ndarray, keff: int) -> np.ndarray:
        d2 = ((X[:, None, :] - self.points[None, :, :]) ** 2).sum(-1)
        # Stable sort on squared distance == tie-break by insertion index.
        return np.argsort(d2, axis=1, kind="stable")[:, :keff]

    def _neighbors_tree(self, X: np.ndarray, keff: int) -> np.ndarray:
        q = keff + 1  # one extra neighbor exposes ties at the k-boundary
        workers = _default_workers if X.shape[0] >= 4096 else 1
        dist, idx = self._tree.query(X, k=q, workers=workers)
        nb = np.ascontiguousarray(idx[:, :keff])
        # Canonicalize row order to (squared distance, index).
        d2 = ((self.points[nb] - X[:, None, :]) ** 2).sum(-1)
        order = np.argsort(d2, axis=1, kind="stable")
        nb = np.take_along_axis(nb, order, 1)
        d2 = np.take_along_axis(d2, order, 1)
        internal = (d2[:, :-1] == d2[:, 1:]).any(1) if keff > 1 else np.zeros(len(X), bool)
        boundary = dist[:, keff - 1] == dist[:, keff]
        for row in np.nonzero(internal | boundary)[0]:
            nb[row] = self._neighbors_exact(X[row], keff, dist[row, keff - 1])
        return nb

    def _neighbors_exact(self, x: np.ndarray, keff: int, radius: float) -> np.ndarray:
        cand = np.asarray(self._tree.query_ball_point(x, radius * (1 + 1e-12)), dtype=np.intp)
        d2 = ((self.points[cand] - x) ** 2).sum(-1)
        return cand[np.lexsort((cand, d2))][:keff]

    def predict_batch(self, X) -> np.ndarray:
        """Mean target of the nearest neighbors per query row; 0 when empty."""
        X = self._check_queries(X)
        if self.size == 0:
            return np.zeros(X.shape[0])
        nb = self.neighbor_indices(X)
        return self.targets[nb].mean(axis=1)

    def predict(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("predict expects a single vector; use predict_batch")
        return float(self.predict_batch(x[None])[0])

    def nearest(self, x, k: int | None = None) -> list[tuple[int, float]]:
        """(index, distance) of the nearest points, ascending (distance, index)."""
        x = np.asarray(x, dtype=np.float64)
        nb = self.neighbor_indices(x[None], k)[0]
        if nb.size == 0:
            return []
        d = np.sqrt(((self.points[nb] - x) ** 2).sum(-1))
        return [(int(i), float(di)) for i, di in zip(nb, d)]


def fit(data, k: int) -> KnnModel:
    """Fit a KNN model from (feature vector, target) pairs; replaces, never
    accumulates."""
    data = list(data)
    if not data:
        return KnnModel.empty(k)
    points = np.stack([np.asarray(p, dtype=np.float64) for p, _ in data])
    targets = np.array([float(t) for _, t in data])
    return KnnModel(points, targets, k)
