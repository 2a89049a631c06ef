"""k-nearest-neighbour selection used as a black-box rule.

The classifier is trained once on first-stage estimates and then only
exposes :meth:`select`; estimators cannot inspect the reference set, which
is why only the stochastic-approximation estimator applies to it.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..core import ArgminRule, ScenarioModel, SelectionRule


class KnnSelectionRule(SelectionRule):
    """Majority vote among the ``k`` nearest reference points (Euclidean).

    Vote ties go to the smallest label.
    """

    def __init__(self, points, labels, k: int = 5, n_labels: int | None = None):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        labels = np.asarray(labels, dtype=np.intp)
        if len(points) == 0:
            raise ValueError("empty reference set")
        if len(labels) != len(points):
            raise ValueError("one label per reference point")
        if not 1 <= k <= len(points):
            raise ValueError(f"k must be in [1, {len(points)}]")
        self.k = int(k)
        self.n_labels = int(n_labels if n_labels is not None else labels.max() + 1)
        self._labels = labels
        self._tree = cKDTree(points)

    def _vote(self, idx: np.ndarray) -> np.ndarray:
        idx = idx.reshape(len(idx), -1)
        votes = np.zeros((len(idx), self.n_labels), dtype=np.intp)
        rows = np.repeat(np.arange(len(idx)), idx.shape[1])
        np.add.at(votes, (rows, self._labels[idx].ravel()), 1)
        return np.argmax(votes, axis=1)

    def select(self, xhat):
        _, idx = self._tree.query(np.asarray(xhat, dtype=float), k=self.k)
        return int(self._vote(np.atleast_1d(idx)[None, :])[0])

    def select_many(self, xhats):
        _, idx = self._tree.query(np.asarray(xhats, dtype=float), k=self.k)
        return self._vote(np.asarray(idx))


def build_knn_rule(model: ScenarioModel, theta, size: int = 500, k: int = 5,
                   rng: np.random.Generator | None = None,
                   labeler: SelectionRule | None = None) -> KnnSelectionRule:
    """Train a kNN rule on ``size`` first-stage estimates.

    Each reference point is an ML draw under a random permutation of
    ``theta`` and is labelled with the index the ``labeler`` (default: argmin)
    assigns to that permuted parameter, so every class is represented.
    """
    rng = np.random.default_rng() if rng is None else rng
    labeler = ArgminRule() if labeler is None else labeler
    theta = np.asarray(theta, dtype=float)
    points = np.empty((size, len(theta)))
    labels = np.empty(size, dtype=np.intp)
    for i in range(size):
        perm = rng.permutation(theta)
        points[i] = model.sample_ml_x(perm, 1, rng)[0]
        labels[i] = labeler.select(perm)
    return KnnSelectionRule(points, labels, k=k, n_labels=len(theta))
