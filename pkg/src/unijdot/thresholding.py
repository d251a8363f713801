"""Binary histogram auto-thresholding: Otsu, Yen, Li and Triangle.

All methods report the threshold as a bin boundary. A split after bin ``t``
puts bins ``0..t`` in the low class and yields ``tau = lo + (t+1)*w``; values
strictly below ``tau`` are in the low class.

Otsu and Yen criteria are evaluated on integer counts so mathematically tied
splits stay bit-identical and ties resolve toward the lower boundary.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .numerics import Histogram, build_histogram


class Method(str, enum.Enum):
    YEN = "yen"
    OTSU = "otsu"
    TRIANGLE = "triangle"
    LI = "li"


@dataclass(frozen=True)
class ThresholdResult:
    tau: float
    method: Method
    degenerate: bool = False


def _degenerate(h: Histogram, method: Method) -> ThresholdResult | None:
    occupied = np.flatnonzero(h.counts)
    if occupied.size >= 2:
        return None
    only = int(occupied[0]) if occupied.size else 0
    return ThresholdResult(tau=h.boundary(only), method=method, degenerate=True)


def _split_sums(counts: np.ndarray):
    """Cumulative count, first moment (bin index) and sum of squares per split."""
    c = counts.astype(np.int64)
    idx = np.arange(c.size, dtype=np.int64)
    n0 = np.cumsum(c)[:-1]
    m0 = np.cumsum(c * idx)[:-1]
    q0 = np.cumsum(c * c)[:-1]
    return n0, c.sum() - n0, m0, (c * idx).sum() - m0, q0, (c * c).sum() - q0


def otsu_criterion(counts: np.ndarray) -> np.ndarray:
    """Between-class variance per split, up to a positive constant.

    ``w0 w1 (mu0-mu1)^2`` with bin index as the value equals
    ``(n1 m0 - n0 m1)^2 / (n0 n1)`` divided by ``N^2``; bin centres are affine
    in the index so the argmax is the same. Invalid splits get ``-inf``.
    """
    n0, n1, m0, m1, _, _ = _split_sums(counts)
    num = (n1 * m0 - n0 * m1).astype(np.float64) ** 2
    den = (n0 * n1).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        crit = num / den
    return np.where((n0 > 0) & (n1 > 0), crit, -np.inf)


def yen_criterion(counts: np.ndarray) -> np.ndarray:
    """Yen's maximum-correlation criterion, as the monotone-equivalent ratio.

    ``-ln(S0) - ln(S1) + 2 ln(P0) + 2 ln(P1)`` with ``S`` the sum of squared
    probabilities on each side equals ``ln[(n0 n1)^2 / (q0 q1)]`` in counts.
    """
    n0, n1, _, _, q0, q1 = _split_sums(counts)
    num = (n0.astype(np.float64) * n1) ** 2
    den = q0.astype(np.float64) * q1
    with np.errstate(divide="ignore", invalid="ignore"):
        crit = num / den
    return np.where((n0 > 0) & (n1 > 0), crit, -np.inf)


def _from_split(h: Histogram, crit: np.ndarray, method: Method) -> ThresholdResult:
    t = int(np.argmax(crit))  # first maximum: ties go to the lower boundary
    return ThresholdResult(tau=h.boundary(t + 1), method=method)


def otsu(h: Histogram) -> ThresholdResult:
    return _degenerate(h, Method.OTSU) or _from_split(h, otsu_criterion(h.counts), Method.OTSU)


def yen(h: Histogram) -> ThresholdResult:
    return _degenerate(h, Method.YEN) or _from_split(h, yen_criterion(h.counts), Method.YEN)


def triangle_scores(counts: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Candidate bins and their (unnormalized) distance below the peak-tail line.

    The line joins ``(peak, h[peak])`` to ``(tail, 0)`` where ``tail`` is the
    farthest nonzero bin on the longer side of the peak (left on equal extent).
    Returns ``(candidates, scores, tail_is_left)``. Scores are exact integer
    cross products, proportional to the perpendicular distance.
    """
    c = counts.astype(np.int64)
    nz = np.flatnonzero(c)
    first, last = int(nz[0]), int(nz[-1])
    peak = int(np.argmax(c))
    ph = int(c[peak])
    if peak - first >= last - peak:
        cand = np.arange(first, peak)
        scores = ph * (cand - first) - (peak - first) * c[cand]
        return cand, scores, True
    cand = np.arange(peak + 1, last + 1)
    scores = ph * (last - cand) - (last - peak) * c[cand]
    return cand, scores, False


def triangle(h: Histogram) -> ThresholdResult:
    deg = _degenerate(h, Method.TRIANGLE)
    if deg:
        return deg
    cand, scores, tail_left = triangle_scores(h.counts)
    best = int(cand[int(np.argmax(scores))])
    # left tail: low class is bins <= best; right tail: high class is bins >= best
    edge = best + 1 if tail_left else best
    return ThresholdResult(tau=h.boundary(edge), method=Method.TRIANGLE)


def li_iterate(centers: np.ndarray, counts: np.ndarray, tol: float, max_iter: int = 1000) -> float:
    """Minimum cross-entropy iteration on positive bin centres, from the mean.

    Stops once a step is below ``tol`` and leaves the low/high split unchanged.
    """
    w = counts.astype(np.float64)
    t = float(np.sum(w * centers) / w.sum())
    for _ in range(max_iter):
        low = centers <= t
        w0, w1 = w[low].sum(), w[~low].sum()
        if w0 == 0 or w1 == 0:
            break
        mu0 = np.sum(w[low] * centers[low]) / w0
        mu1 = np.sum(w[~low] * centers[~low]) / w1
        t_next = float((mu1 - mu0) / (np.log(mu1) - np.log(mu0)))
        # small step alone can stop mid-creep; also require a stable partition
        done = abs(t_next - t) < tol and np.array_equal(low, centers <= t_next)
        t = t_next
        if done:
            break
    return t


def li(h: Histogram) -> ThresholdResult:
    deg = _degenerate(h, Method.LI)
    if deg:
        return deg
    w = h.width
    shift = (w - h.lo) if h.lo <= 0 else 0.0
    t = li_iterate(h.centers + shift, h.counts, tol=0.5 * w) - shift
    # snap to the boundary just above the last centre in the low class
    k = int(np.searchsorted(h.centers, t, side="right")) - 1
    k = min(max(k, 0), h.bin_count - 2)
    return ThresholdResult(tau=h.boundary(k + 1), method=Method.LI)


_DISPATCH = {Method.YEN: yen, Method.OTSU: otsu, Method.TRIANGLE: triangle, Method.LI: li}


def threshold_histogram(h: Histogram, method: Method | str = Method.YEN) -> ThresholdResult:
    return _DISPATCH[Method(method)](h)


def auto_threshold(values, method: Method | str = Method.YEN, bin_count: int | None = None) -> ThresholdResult:
    """Histogram the values and threshold them; bins default to twice the sample count."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("auto_threshold needs at least one value")
    if bin_count is None:
        bin_count = max(2, 2 * values.size)
    return threshold_histogram(build_histogram(values, bin_count), method)
