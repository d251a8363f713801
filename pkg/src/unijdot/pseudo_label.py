"""Target pseudo-labelling: classwise source memory, distance-regularized
decision vectors, and a batch-level auto-threshold split into Common/Unknown.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import pairwise_sq_dist, softmax
from .thresholding import Method, auto_threshold


class ClassMemory:
    """Per-class FIFO ring buffers of source feature vectors."""

    def __init__(self, n_classes: int, dim: int, capacity: int, dtype=np.float32):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.n_classes = n_classes
        self.dim = dim
        self.capacity = capacity
        self.buffers = np.zeros((n_classes, capacity, dim), dtype=dtype)
        self.counts = np.zeros(n_classes, dtype=np.int64)
        self.cursors = np.zeros(n_classes, dtype=np.int64)

    @property
    def initialized(self) -> bool:
        return bool(np.all(self.counts >= 1))

    def vectors(self, k: int) -> np.ndarray:
        return self.buffers[k, : self.counts[k]]

    def push(self, k: int, v: np.ndarray) -> None:
        self.buffers[k, self.cursors[k]] = v
        self.cursors[k] = (self.cursors[k] + 1) % self.capacity
        self.counts[k] = min(self.counts[k] + 1, self.capacity)

    def copy(self) -> "ClassMemory":
        other = ClassMemory(self.n_classes, self.dim, self.capacity, self.buffers.dtype)
        other.buffers = self.buffers.copy()
        other.counts = self.counts.copy()
        other.cursors = self.cursors.copy()
        return other


def memory_init(source_features, source_labels, n_classes: int, capacity: int, seed: int = 0) -> ClassMemory:
    """Fill each class buffer with up to ``capacity`` seeded draws without replacement."""
    feats = np.asarray(source_features)
    labels = np.asarray(source_labels)
    missing = sorted(set(range(n_classes)) - set(np.unique(labels).tolist()))
    if missing:
        raise ValueError(f"classes {missing} have no source sample; distances would be undefined")
    rng = np.random.default_rng(seed)
    mem = ClassMemory(n_classes, feats.shape[1], capacity, dtype=feats.dtype)
    for k in range(n_classes):
        idx = np.flatnonzero(labels == k)
        take = rng.choice(idx, size=min(capacity, idx.size), replace=False)
        for i in take:
            mem.push(k, feats[i])
    return mem


def memory_update(mem: ClassMemory, batch_features, batch_labels) -> ClassMemory:
    feats = np.asarray(batch_features)
    for v, k in zip(feats, np.asarray(batch_labels, dtype=np.int64)):
        if not 0 <= k < mem.n_classes:
            raise ValueError(f"label {k} out of range")
        mem.push(int(k), v)
    return mem


def distance_matrix(features, mem: ClassMemory) -> np.ndarray:
    """Row ``i``: squared distance from ``features[i]`` to its nearest stored vector of each class."""
    if not mem.initialized:
        raise ValueError("class memory is not initialized")
    feats = np.atleast_2d(np.asarray(features))
    out = np.empty((feats.shape[0], mem.n_classes), dtype=np.float64)
    for k in range(mem.n_classes):
        out[:, k] = pairwise_sq_dist(feats, mem.vectors(k)).min(axis=1)
    return out


def distance_vector(g_t, mem: ClassMemory) -> np.ndarray:
    return distance_matrix(np.asarray(g_t)[None, :], mem)[0]


def joint_decision(logits, distances) -> np.ndarray:
    """``softmax(h * softmax(-d))`` along the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    return softmax(logits * softmax(-np.asarray(distances, dtype=np.float64)))


@dataclass
class PseudoLabelBatch:
    p_prime: np.ndarray
    confidences: np.ndarray
    tau: float
    unknown: np.ndarray  # bool mask, True = Unknown
    degenerate: bool = False

    @property
    def common(self) -> np.ndarray:
        return ~self.unknown

    @property
    def n_unknown(self) -> int:
        return int(self.unknown.sum())

    @property
    def n_common(self) -> int:
        return int((~self.unknown).sum())


def decision_probs(logits, features, mem: ClassMemory | None, joint: bool = True) -> np.ndarray:
    if joint:
        return joint_decision(logits, distance_matrix(features, mem))
    return softmax(np.asarray(logits, dtype=np.float64))


def pseudo_label_batch(
    logits,
    features,
    mem: ClassMemory | None,
    method: Method | str = Method.YEN,
    bin_count: int | None = None,
    joint: bool = True,
    fixed_tau: float | None = None,
) -> PseudoLabelBatch:
    """Label a target batch Common/Unknown from the distribution of max p'.

    With ``fixed_tau`` the histogram step is skipped. A degenerate histogram
    (single occupied bin) labels everything Common.
    """
    logits = np.asarray(logits)
    if logits.shape[0] == 0:
        raise ValueError("empty batch")
    p = decision_probs(logits, features, mem, joint)
    conf = p.max(axis=1)
    degenerate = False
    if fixed_tau is None:
        res = auto_threshold(conf, method, bin_count)
        tau, degenerate = res.tau, res.degenerate
    else:
        tau = float(fixed_tau)
    if degenerate:
        unknown = np.zeros(conf.shape, dtype=bool)
    else:
        unknown = conf < tau
    return PseudoLabelBatch(p_prime=p, confidences=conf, tau=float(tau), unknown=unknown, degenerate=degenerate)
