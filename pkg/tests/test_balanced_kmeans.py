import numpy as np
import pytest

from flowgate.balanced_kmeans import cluster


def random_bits(rng, n, d):
    return (rng.random((n, d)) < 0.5).astype(np.uint8)


def test_single_cluster():
    rng = np.random.default_rng(0)
    points = random_bits(rng, 12, 6)
    out = cluster(points, 1, seed=0)
    assert np.all(out.assignments == 0)


def test_perfectly_separated_groups():
    points = np.array([[0, 0, 0, 0]] * 4 + [[1, 1, 1, 1]] * 4, dtype=np.uint8)
    out = cluster(points, 2, seed=3)
    first, second = out.assignments[:4], out.assignments[4:]
    assert len(set(first)) == 1 and len(set(second)) == 1
    assert first[0] != second[0]


def test_capacity_arithmetic():
    rng = np.random.default_rng(1)
    out = cluster(random_bits(rng, 10, 5), 3, seed=1)
    sizes = sorted(np.bincount(out.assignments, minlength=3))
    assert sizes == [3, 3, 4]


def test_errors():
    points = np.zeros((3, 4), dtype=np.uint8)
    with pytest.raises(ValueError):
        cluster(points, 0, seed=0)
    with pytest.raises(ValueError):
        cluster(points, 4, seed=0)


def test_every_point_assigned_once():
    rng = np.random.default_rng(5)
    points = random_bits(rng, 23, 8)
    out = cluster(points, 4, seed=5)
    assert out.assignments.shape == (23,)
    assert np.all((out.assignments >= 0) & (out.assignments < 4))


def test_balance_and_determinism_randomized():
    rng = np.random.default_rng(42)
    for _ in range(50):
        n = int(rng.integers(2, 64))
        k = int(rng.integers(1, min(n, 8) + 1))
        d = int(rng.integers(2, 20))
        seed = int(rng.integers(1 << 31))
        points = random_bits(rng, n, d)
        out = cluster(points, k, seed=seed)
        sizes = np.bincount(out.assignments, minlength=k)
        assert sizes.max() - sizes.min() <= 1
        again = cluster(points, k, seed=seed)
        assert np.array_equal(out.assignments, again.assignments)
        assert np.array_equal(out.centroids, again.centroids)
