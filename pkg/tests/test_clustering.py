import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from sklearn.cluster import MeanShift

from mc3dtrack.clustering import FlatMeanShift, meanshift_cluster

from oracles import flat_mean_shift


def by_row(a):
    return a[np.lexsort(a.T[::-1])]


def test_single_point():
    centroids, labels = meanshift_cluster([[1.5, -2.0]], 0.5)
    np.testing.assert_array_equal(centroids, [[1.5, -2.0]])
    np.testing.assert_array_equal(labels, [0])


def test_empty():
    centroids, labels = meanshift_cluster(np.empty((0, 2)), 0.5)
    assert centroids.shape == (0, 2) and labels.shape == (0,)


def test_separated_groups():
    rng = np.random.default_rng(0)
    a = rng.normal([0, 0], 0.05, size=(5, 2))
    b = rng.normal([10, 0], 0.05, size=(5, 2))
    centroids, labels = meanshift_cluster(np.vstack([a, b]), 0.5)
    assert len(centroids) == 2
    np.testing.assert_allclose(by_row(centroids), [a.mean(0), b.mean(0)], atol=1e-3)
    assert len(set(labels[:5])) == 1 and len(set(labels[5:])) == 1 and labels[0] != labels[5]


def three_blobs(seed, n=200):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0], [3, 1], [1, 4]])
    return centers[rng.integers(3, size=n)] + rng.normal(0, 0.3, size=(n, 2))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_reference_implementation(seed):
    X = three_blobs(seed)
    centroids, _ = meanshift_cluster(X, 0.8, tol=1e-6, max_iter=1000)
    ref = flat_mean_shift(X, 0.8)
    assert len(centroids) == len(ref)
    np.testing.assert_allclose(by_row(centroids), by_row(ref), atol=1e-3)


@pytest.mark.parametrize("seed", [0, 1])
def test_sklearn_modes_agree(seed):
    # sklearn merges within the full bandwidth, so compare its modes against ours on well separated blobs
    X = three_blobs(seed)
    ours, _ = meanshift_cluster(X, 1.0, tol=1e-6, max_iter=1000)
    theirs = MeanShift(bandwidth=1.0).fit(X).cluster_centers_
    assert len(ours) == len(theirs) == 3
    np.testing.assert_allclose(by_row(ours), by_row(theirs), atol=1e-3)


@given(hnp.arrays(float, st.tuples(st.integers(1, 25), st.just(2)), elements=st.floats(-5, 5)))
def test_labels_are_nearest_mode(X):
    centroids, labels = meanshift_cluster(X, 0.7)
    assert 1 <= len(centroids) <= len(X)
    d = np.linalg.norm(X[:, None] - centroids[None], axis=-1)
    np.testing.assert_allclose(d[np.arange(len(X)), labels], d.min(axis=1))
    gaps = np.linalg.norm(centroids[:, None] - centroids[None], axis=-1) + np.eye(len(centroids)) * 1e9
    assert gaps.min() >= 0.35 - 1e-12


def test_bad_bandwidth():
    with pytest.raises(ValueError):
        meanshift_cluster([[0.0, 0.0]], 0.0)


def test_estimator_wrapper():
    X = three_blobs(3)
    est = FlatMeanShift(bandwidth=0.8).fit(X)
    centroids, labels = meanshift_cluster(X, 0.8)
    np.testing.assert_array_equal(est.cluster_centers_, centroids)
    np.testing.assert_array_equal(est.labels_, labels)
    np.testing.assert_array_equal(est.predict(X), labels)
    np.testing.assert_array_equal(FlatMeanShift(bandwidth=0.8).fit_predict(X), labels)
    assert est.get_params()["bandwidth"] == 0.8
