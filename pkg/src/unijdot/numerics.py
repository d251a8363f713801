"""Numeric primitives shared across the package.

Everything here is a pure function of its inputs. Arrays are plain numpy
ndarrays; callers choose float32 for training and float64 for gradient checks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEGENERATE_WIDEN = 1e-9


def _check_finite(x: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")


def softmax(v, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax along ``axis``."""
    v = np.asarray(v)
    if v.size == 0 or v.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    _check_finite(v, "softmax input")
    if not np.issubdtype(v.dtype, np.floating):
        v = v.astype(np.float64)
    z = v - v.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(v, axis: int = -1) -> np.ndarray:
    v = np.asarray(v)
    z = v - v.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.exp(x - m).sum(axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def pairwise_sq_dist(A, B) -> np.ndarray:
    """Squared Euclidean distances between the rows of ``A`` (n×d) and ``B`` (m×d).

    Uses explicit differences rather than the ``|a|²+|b|²-2ab`` expansion so
    self-distances are exactly zero.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError(f"expected 2-d inputs, got shapes {A.shape} and {B.shape}")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"inner dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray
    lo: float
    hi: float
    total: int = field(default=-1)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size < 2:
            raise ValueError("histogram needs at least 2 bins")
        if np.any(counts < 0):
            raise ValueError("negative bin count")
        if not self.lo < self.hi:
            raise ValueError(f"invalid range [{self.lo}, {self.hi}]")
        object.__setattr__(self, "counts", counts)
        total = int(counts.sum())
        if self.total == -1:
            object.__setattr__(self, "total", total)
        elif self.total != total:
            raise ValueError(f"total {self.total} != sum of counts {total}")

    @property
    def bin_count(self) -> int:
        return self.counts.size

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.bin_count

    @property
    def edges(self) -> np.ndarray:
        return bin_edges(self.lo, self.hi, self.bin_count)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    def boundary(self, i: int) -> float:
        """Left edge of bin ``i`` (``i == bin_count`` gives ``hi``)."""
        return float(self.edges[i])


def bin_edges(lo: float, hi: float, bin_count: int) -> np.ndarray:
    w = (hi - lo) / bin_count
    edges = lo + np.arange(bin_count + 1, dtype=np.float64) * w
    edges[-1] = hi
    return edges


def build_histogram(values, bin_count: int, range: tuple[float, float] | None = None) -> Histogram:
    """Bucket ``values`` into ``bin_count`` equal-width bins.

    Bin ``i`` covers ``[edge_i, edge_{i+1})``; the last bin is closed. When no
    range is given and all values coincide, the range is widened upward by
    1e-9 so every value lands in bin 0.
    """
    if bin_count < 2:
        raise ValueError(f"bin_count must be >= 2, got {bin_count}")
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("cannot build a histogram of no values")
    _check_finite(values, "histogram values")
    if range is None:
        lo, hi = float(values.min()), float(values.max())
        if not lo < hi:
            hi = lo + DEGENERATE_WIDEN
            if not lo < hi:  # 1e-9 below the float spacing at this magnitude
                hi = np.nextafter(lo, np.inf)
    else:
        lo, hi = map(float, range)
        if not lo < hi:
            raise ValueError(f"invalid range {range}")
        if values.min() < lo or values.max() > hi:
            raise ValueError("values fall outside the histogram range")
    edges = bin_edges(lo, hi, bin_count)
    idx = np.searchsorted(edges, values, side="right") - 1
    idx = np.clip(idx, 0, bin_count - 1)
    counts = np.bincount(idx, minlength=bin_count)
    return Histogram(counts=counts, lo=lo, hi=hi, total=int(values.size))


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    objective_history: list[float]

    @property
    def objective(self) -> float:
        return self.objective_history[-1]


def kmeans_objective(points, centroids) -> float:
    """Within-cluster sum of squares with points assigned to their nearest centroid."""
    return float(pairwise_sq_dist(points, centroids).min(axis=1).sum())


def _kmeanspp(points: np.ndarray, L: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = pairwise_sq_dist(points, points[chosen]).min(axis=1)
    for _ in range(1, L):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining points coincide with chosen centroids
            remaining = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(remaining))
        chosen.append(nxt)
        d2 = np.minimum(d2, pairwise_sq_dist(points, points[[nxt]])[:, 0])
    return points[chosen].astype(np.float64)


def lloyd(points, L: int, max_iters: int = 100, seed: int = 0) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding.

    ``objective_history[i]`` is the within-cluster sum of squares after
    iteration ``i`` (index 0 is the seeding). Empty clusters are re-seeded at
    the point farthest from its assigned centroid.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be an n×d matrix")
    n = points.shape[0]
    if L < 1 or n < L:
        raise ValueError(f"kmeans needs n >= L >= 1 (n={n}, L={L})")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(points, L, rng)
    d2 = pairwise_sq_dist(points, centroids)
    labels = d2.argmin(axis=1)
    history = [float(d2.min(axis=1).sum())]
    for _ in range(max_iters):
        new = centroids.copy()
        for l in range(L):
            members = labels == l
            if members.any():
                new[l] = points[members].mean(axis=0)
        empty = [l for l in range(L) if not np.any(labels == l)]
        if empty:
            own = pairwise_sq_dist(points, new)[np.arange(n), labels]
            for l in empty:
                far = int(own.argmax())
                new[l] = points[far]
                own[far] = -1.0
        d2 = pairwise_sq_dist(points, new)
        new_labels = d2.argmin(axis=1)
        history.append(float(d2.min(axis=1).sum()))
        moved = not np.array_equal(new, centroids)
        centroids = new
        if np.array_equal(new_labels, labels) and not moved:
            break
        labels = new_labels
    return KMeansResult(centroids=centroids, labels=labels, objective_history=history)


def kmeans(points, L: int, max_iters: int = 100, seed: int = 0) -> np.ndarray:
    return lloyd(points, L, max_iters=max_iters, seed=seed).centroids
