import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unijdot.anchors import decision_anchor, init_anchors, update_anchors
from unijdot.numerics import kmeans, kmeans_objective


def test_single_anchor_is_the_mean(rng):
    x = rng.normal(size=(40, 3))
    a = init_anchors(x, 1, 4)
    np.testing.assert_allclose(a.centroids[0], x.mean(axis=0), atol=1e-12)


def test_one_anchor_per_point(rng):
    x = rng.normal(size=(5, 2))
    a = init_anchors(x, 5, 3, seed=1)
    assert sorted(map(tuple, a.centroids)) == sorted(map(tuple, x))


def test_init_is_seeded_and_shares_kmeans(rng):
    x = rng.normal(size=(60, 4))
    a = init_anchors(x, 3, 4, seed=9)
    b = init_anchors(x, 3, 4, seed=9)
    assert a.centroids.tobytes() == b.centroids.tobytes()
    np.testing.assert_allclose(kmeans_objective(x, a.centroids), kmeans_objective(x, kmeans(x, 3, seed=9)), rtol=1e-12)


def test_init_errors(rng):
    with pytest.raises(ValueError):
        init_anchors(rng.normal(size=(2, 3)), 3, 4)
    with pytest.raises(ValueError):
        init_anchors(rng.normal(size=(5, 3)), 2, 4, momentum=0.0)


def test_empty_update_is_noop(rng):
    a = init_anchors(rng.normal(size=(10, 2)), 2, 3)
    assert update_anchors(a, np.zeros((0, 2))) is a


def test_full_momentum_replaces_centroid():
    a = init_anchors(np.array([[0.0, 0.0], [10.0, 10.0]]), 2, 3, momentum=1.0)
    pts = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 2.0]])
    nearest = int(np.argmin(((a.centroids - pts.mean(axis=0)) ** 2).sum(axis=1)))
    b = update_anchors(a, pts)
    np.testing.assert_allclose(b.centroids[nearest], pts.mean(axis=0))
    np.testing.assert_array_equal(b.centroids[1 - nearest], a.centroids[1 - nearest])


def test_moving_average_tracks_a_stream(rng):
    a = init_anchors(np.array([[0.0, 0.0], [50.0, 50.0]]), 2, 3, momentum=0.1)
    target = np.array([2.0, -1.0])
    for _ in range(200):
        a = update_anchors(a, target + 0.3 * rng.normal(size=(16, 2)))
    near = int(np.argmin(((a.centroids - target) ** 2).sum(axis=1)))
    assert np.linalg.norm(a.centroids[near] - target) < 0.05


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 1.0))
def test_update_stays_in_hull(seed, m):
    r = np.random.default_rng(seed)
    a = init_anchors(r.normal(size=(12, 3)), 3, 4, seed=seed % 7, momentum=m)
    pts = r.normal(size=(8, 3)) * 3
    b = update_anchors(a, pts)
    nearest = ((pts[:, None, :] - a.centroids[None]) ** 2).sum(-1).argmin(1)
    for l in range(3):
        if not np.any(nearest == l):
            np.testing.assert_array_equal(b.centroids[l], a.centroids[l])
            continue
        mean = pts[nearest == l].mean(axis=0)
        # b = (1 - m) a + m mean lies on the segment [a, mean]
        np.testing.assert_allclose(b.centroids[l], (1 - m) * a.centroids[l] + m * mean, atol=1e-12)


@pytest.mark.parametrize("K", [2, 3, 5, 12])
def test_decision_anchor_is_uniform_max_entropy(K, rng):
    r = decision_anchor(K)
    assert abs(r.sum() - 1) < 1e-12 and np.all(r == r[0])
    assert abs(-np.sum(r * np.log(r)) - math.log(K)) < 1e-12
    for _ in range(20):
        p = rng.dirichlet(np.ones(K))
        assert -np.sum(p * np.log(p)) <= math.log(K) + 1e-12
    np.testing.assert_allclose(decision_anchor(2), [0.5, 0.5])


def test_decision_anchor_rejects_single_class():
    with pytest.raises(ValueError):
        decision_anchor(1)
