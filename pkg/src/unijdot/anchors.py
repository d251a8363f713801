"""Transport destinations for Unknown-labelled target samples."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .numerics import kmeans, pairwise_sq_dist


@dataclass(frozen=True)
class AnchorSet:
    centroids: np.ndarray  # (L, D)
    momentum: float
    decision_anchor: np.ndarray  # (K,)

    @property
    def L(self) -> int:
        return self.centroids.shape[0]


def decision_anchor(K: int) -> np.ndarray:
    """The maximally uncertain class-probability vector."""
    if K < 2:
        raise ValueError("need at least 2 classes")
    return np.full(K, 1.0 / K)


def init_anchors(target_features, L: int, n_classes: int, seed: int = 0, momentum: float = 0.1, max_iters: int = 100) -> AnchorSet:
    """K-means centroids of all target features."""
    feats = np.asarray(target_features, dtype=np.float64)
    if feats.shape[0] < L:
        raise ValueError(f"need at least L={L} target features, got {feats.shape[0]}")
    if not 0 < momentum <= 1:
        raise ValueError("momentum must be in (0, 1]")
    cents = kmeans(feats, L, max_iters=max_iters, seed=seed)
    return AnchorSet(centroids=cents, momentum=momentum, decision_anchor=decision_anchor(n_classes))


def update_anchors(anchors: AnchorSet, unknown_features) -> AnchorSet:
    """Moving-average step toward the mean of the Unknown features nearest each centroid."""
    feats = np.asarray(unknown_features, dtype=np.float64)
    if feats.size == 0:
        return anchors
    feats = feats.reshape(-1, anchors.centroids.shape[1])
    nearest = pairwise_sq_dist(feats, anchors.centroids).argmin(axis=1)
    cents = anchors.centroids.copy()
    m = anchors.momentum
    for l in np.unique(nearest):
        cents[l] = (1 - m) * cents[l] + m * feats[nearest == l].mean(axis=0)
    return replace(anchors, centroids=cents)
