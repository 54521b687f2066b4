import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvi.knn import BRUTE_FORCE_MIN, KnnModel, fit


def scan_neighbors(points, x, k):
    """Independent oracle: linear scan ordered by (squared distance, index)."""
    d2 = [float(np.dot(p - x, p - x)) for p in points]
    order = sorted(range(len(points)), key=lambda i: (d2[i], i))
    return order[: min(k, len(points))]


def scan_predict(points, targets, x, k):
    if len(points) == 0:
        return 0.0
    nbrs = scan_neighbors(points, x, k)
    return float(np.mean(np.asarray(targets)[nbrs]))


class TestFit:
    def test_empty_fit_is_valid(self):
        m = fit([], k=5)
        assert m.size == 0
        assert m.predict(np.array([1.0, 2.0])) == 0.0

    def test_size(self):
        m = fit([(np.array([float(i), 0.0]), float(i)) for i in range(7)], k=3)
        assert m.size == 7

    def test_refit_replaces(self):
        m1 = fit([(np.array([0.0, 0.0]), 1.0)], k=1)
        m2 = fit([(np.array([5.0, 5.0]), 2.0)], k=1)
        assert m2.predict(np.array([0.0, 0.0])) == 2.0
        assert m1.predict(np.array([0.0, 0.0])) == 1.0  # old model untouched

    def test_invalid(self):
        with pytest.raises(ValueError):
            KnnModel(np.empty((2, 0)), np.zeros(2), 1)
        with pytest.raises(ValueError):
            KnnModel(np.zeros((2, 2)), np.zeros(3), 1)
        with pytest.raises(ValueError):
            KnnModel(np.zeros((1, 1)), np.zeros(1), 0)


class TestPredict:
    def test_single_point(self):
        m = fit([(np.array([0.0, 0.0]), 1.0)], k=5)
        assert m.predict(np.array([0.0, 0.0])) == 1.0

    def test_two_nearest_mean(self):
        m = fit([((0.0, 0.0), 0.0), ((1.0, 0.0), 1.0), ((2.0, 0.0), 0.5)], k=2)
        # nearest to (0.9, 0): (1,0) then (0,0) -> mean(1.0, 0.0)
        assert m.predict(np.array([0.9, 0.0])) == 0.5

    def test_fewer_points_than_k(self):
        m = fit([((0.0, 0.0), 0.0), ((1.0, 0.0), 1.0)], k=5)
        assert m.predict(np.array([0.0, 0.1])) == 0.5

    def test_dimension_mismatch(self):
        m = fit([((0.0, 0.0), 0.0)], k=1)
        with pytest.raises(ValueError):
            m.predict(np.array([0.0, 0.0, 0.0]))


class TestNearest:
    def test_tie_breaks_by_insertion_index(self):
        m = fit([((1.0, 0.0), 0.0), ((-1.0, 0.0), 1.0)], k=1)
        assert m.nearest(np.array([0.0, 0.0]), k=2) == [(0, 1.0), (1, 1.0)]

    def test_k_exceeding_size(self):
        m = fit([((0.0, 0.0), 0.0)], k=1)
        assert len(m.nearest(np.zeros(2), k=10)) == 1

    def test_tie_rule_on_tree_path(self):
        n = 4 * BRUTE_FORCE_MIN
        pts = np.zeros((n, 2))
        pts[: n // 2, 0] = 1.0
        pts[n // 2 :, 0] = -1.0
        m = KnnModel(pts, np.arange(n, dtype=float), 3)
        assert m._tree is not None
        assert [i for i, _ in m.nearest(np.zeros(2), k=3)] == [0, 1, 2]

    def test_matches_scan_on_random_model(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(100, 3))
        m = KnnModel(pts, rng.normal(size=100), 4)
        for _ in range(20):
            x = rng.normal(size=3)
            got = [i for i, _ in m.nearest(x)]
            assert got == scan_neighbors(pts, x, 4)


@st.composite
def model_and_queries(draw):
    n = draw(st.integers(1, 160))
    d = draw(st.integers(1, 5))
    k = draw(st.integers(1, 8))
    # a coarse grid of values makes exact distance ties likely
    coord = st.integers(-3, 3).map(float)
    pts = np.array([[draw(coord) for _ in range(d)] for _ in range(n)])
    targets = np.array([draw(st.integers(-5, 5)) for _ in range(n)], dtype=float)
    q = np.array([[draw(coord) for _ in range(d)] for _ in range(draw(st.integers(1, 3)))])
    return pts, targets, k, q


class TestOracleEquivalence:
    @given(model_and_queries())
    @settings(max_examples=150, deadline=None)
    def test_predict_equals_scan_with_ties(self, case):
        pts, targets, k, queries = case
        m = KnnModel(pts, targets, k)
        for x in queries:
            assert m.predict(x) == scan_predict(pts, targets, x, k)
            got = [i for i, _ in m.nearest(x)]
            assert got == scan_neighbors(pts, x, k)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    @settings(max_examples=60, deadline=None)
    def test_predict_equals_scan_random(self, seed, k):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 400))
        d = int(rng.integers(1, 7))
        pts = rng.normal(size=(n, d))
        targets = rng.normal(size=n)
        m = KnnModel(pts, targets, k)
        for _ in range(5):
            x = rng.normal(size=d)
            assert m.predict(x) == scan_predict(pts, targets, x, k)

    def test_batch_equals_scalar(self):
        rng = np.random.default_rng(11)
        pts = rng.normal(size=(300, 4))
        m = KnnModel(pts, rng.normal(size=300), 5)
        X = rng.normal(size=(64, 4))
        batch = m.predict_batch(X)
        assert np.array_equal(batch, [m.predict(x) for x in X])


class TestProperties:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_interpolation_bound(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 200))
        pts = rng.normal(size=(n, 2))
        targets = rng.normal(size=n)
        m = KnnModel(pts, targets, 5)
        x = rng.normal(size=2)
        nbrs = [i for i, _ in m.nearest(x)]
        p = m.predict(x)
        assert targets[nbrs].min() - 1e-12 <= p <= targets[nbrs].max() + 1e-12

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_exact_at_data_with_k1(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 120))
        pts = np.unique(rng.integers(-50, 50, size=(n, 2)), axis=0).astype(float)
        targets = rng.normal(size=len(pts))
        m = KnnModel(pts, targets, 1)
        for i in range(0, len(pts), max(1, len(pts) // 10)):
            assert m.predict(pts[i]) == targets[i]

    def test_determinism_under_ties(self):
        pts = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]] * 40)
        m = KnnModel(pts, np.arange(160, dtype=float), 5)
        first = m.nearest(np.zeros(2))
        for _ in range(5):
            assert m.nearest(np.zeros(2)) == first
