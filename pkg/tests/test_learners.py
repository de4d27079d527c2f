import numpy as np
import pytest

import boro
from boro.errors import EmptyContextWindow, SingularCovariance
from boro.learners import select_neighborhood


def dataset(pairs, ydim=1):
    X = np.array([p[0] if isinstance(p[0], (list, tuple)) else [p[0]] for p in pairs], dtype=float)
    Y = np.array([p[1] if isinstance(p[1], (list, tuple)) else [p[1]] for p in pairs], dtype=float)
    return boro.Dataset(X, Y)


class TestNwContextualize:
    def test_uniform_wide_window_reduces_to_marginal(self):
        data = dataset([(0.0, 1.0), (1.0, 2.0), (1.0, 2.0), (2.0, 5.0)])
        m = boro.empirical_model(data)
        lw = boro.NwLearner(boro.get_smoother("uniform"), 100.0)
        d = boro.nw_contextualize(lw, m, np.array([0.5]))
        assert d.weights == pytest.approx(m.prob, abs=1e-12)

    def test_point_mass_when_window_excludes(self):
        data = dataset([(0.0, 1.0), (1.0, 2.0)])
        m = boro.empirical_model(data)
        lw = boro.NwLearner(boro.get_smoother("uniform"), 0.5)
        d = boro.nw_contextualize(lw, m, np.array([0.0]))
        assert d.weights == pytest.approx([1.0, 0.0], abs=1e-15)
        assert d.labels[0, 0] == 1.0

    def test_naive_equals_label_marginal(self):
        rng = np.random.default_rng(0)
        data = boro.Dataset(rng.normal(size=(15, 2)), rng.normal(size=(15, 1)))
        m = boro.empirical_model(data)
        lw = boro.NwLearner(boro.get_smoother("naive"), 1.0)
        d = boro.nw_contextualize(lw, m, rng.normal(size=2))
        assert d.weights == pytest.approx(m.prob, abs=1e-12)

    def test_empty_window_raises(self):
        data = dataset([(0.0, 1.0), (1.0, 2.0)])
        m = boro.empirical_model(data)
        lw = boro.NwLearner(boro.get_smoother("uniform"), 0.1)
        with pytest.raises(EmptyContextWindow, match="empty context window"):
            boro.nw_contextualize(lw, m, np.array([5.0]))


class TestMahalanobis:
    def test_identity_covariance_is_squared_euclid(self):
        rng = np.random.default_rng(1)
        # whiten the sample so the empirical covariance is exactly I
        raw = rng.normal(size=(60, 2))
        raw = raw - raw.mean(axis=0)
        cov = raw.T @ raw / raw.shape[0]
        L = np.linalg.cholesky(cov)
        X = raw @ np.linalg.inv(L).T
        data = boro.Dataset(X, rng.normal(size=(60, 1)))
        prox = boro.mahalanobis_proximity(data)
        xbar = np.array([0.3, -0.4])
        for i in range(10):
            want = float(np.sum((X[i] - xbar) ** 2))
            assert prox.base(X[i], data.Y[i], xbar) == pytest.approx(want, rel=1e-9)

    def test_diag_covariance_hand_value(self):
        # population covariance diag(4, 1)
        X = np.array([[2.0, 1.0], [-2.0, -1.0], [2.0, -1.0], [-2.0, 1.0]])
        data = boro.Dataset(X, np.arange(4.0)[:, None])
        prox = boro.mahalanobis_proximity(data)
        d = prox.base(np.array([2.0, 0.0]), np.array([0.0]), np.array([0.0, 0.0]))
        assert d == pytest.approx(1.0, rel=1e-12)

    def test_singular_covariance_suggests_ridge(self):
        X = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
        data = boro.Dataset(X, np.arange(5.0)[:, None])
        with pytest.raises(SingularCovariance, match="ridge"):
            boro.mahalanobis_proximity(data)
        prox = boro.mahalanobis_proximity(data, ridge=1e-6)
        assert prox.base(X[0], data.Y[0], np.zeros(2)) >= 0

    def test_equidistant_ties_broken_by_label(self):
        data = dataset([(1.0, 5.0), (-1.0, 2.0), (0.5, 9.0)])
        m = boro.empirical_model(data)
        prox = boro.mahalanobis_proximity(data)
        chain = boro.build_neighborhoods(prox, m, np.array([0.0]))
        # the +-1 points are equidistant from 0; the smaller label comes first
        first_two = [m.ys[i][0] for i in chain.order[:2]]
        d0 = prox.base(m.xs[chain.order[0]], m.ys[chain.order[0]], np.array([0.0]))
        d1 = prox.base(m.xs[chain.order[1]], m.ys[chain.order[1]], np.array([0.0]))
        if d0 == pytest.approx(d1):
            assert first_two[0] < first_two[1]


class TestNeighborhoods:
    def test_single_point_chain(self):
        data = dataset([(0.0, 1.0)])
        m = boro.empirical_model(data)
        chain = boro.build_neighborhoods(boro.mahalanobis_proximity(dataset([(0.0, 1.0), (1.0, 2.0)])), m, [0.0])
        assert chain.size == 1
        assert list(chain.cum) == [0.0, 1.0]

    def test_sorted_by_distance(self):
        data = dataset([(0.3, 1.0), (0.1, 2.0), (0.2, 3.0)])
        m = boro.empirical_model(data)
        prox = boro.mahalanobis_proximity(data)
        chain = boro.build_neighborhoods(prox, m, np.array([0.0]))
        ordered_x = m.xs[chain.order, 0]
        assert list(ordered_x) == sorted(ordered_x, key=abs)
        assert np.all(np.diff(chain.distances) >= 0)

    def test_deterministic_tiebreak_across_runs(self):
        data = dataset([(1.0, 5.0), (-1.0, 2.0)])
        m = boro.empirical_model(data)
        prox = boro.mahalanobis_proximity(data)
        orders = {tuple(boro.build_neighborhoods(prox, m, np.array([0.0])).order) for _ in range(5)}
        assert len(orders) == 1

    def test_nested_prefixes(self):
        rng = np.random.default_rng(2)
        data = boro.Dataset(rng.normal(size=(12, 1)), rng.normal(size=(12, 1)))
        m = boro.empirical_model(data)
        chain = boro.build_neighborhoods(boro.mahalanobis_proximity(data), m, [0.2])
        for j in range(1, chain.size + 1):
            assert set(chain.prefix(j - 1)).issubset(set(chain.prefix(j)))
            assert len(chain.prefix(j)) == j


class TestNnContextualize:
    def test_k_equals_n_full_support(self):
        rng = np.random.default_rng(3)
        data = boro.Dataset(rng.normal(size=(9, 1)), rng.normal(size=(9, 1)))
        m = boro.empirical_model(data)
        prox = boro.mahalanobis_proximity(data)
        ln = boro.NnLearner(boro.get_smoother("naive"), 1.0, data.n, prox)
        d = boro.nn_contextualize(ln, m, np.array([0.0]))
        assert d.size == m.support_size
        assert d.weights == pytest.approx(m.prob, abs=1e-12)

    def test_nearest_point_mass(self):
        data = dataset([(0.1, 1.0), (0.2, 2.0), (0.3, 3.0)])
        m = boro.empirical_model(data)
        prox = boro.mahalanobis_proximity(data)
        ln = boro.NnLearner(boro.get_smoother("naive"), 1.0, 1, prox)
        d = boro.nn_contextualize(ln, m, np.array([0.0]))
        assert d.weights == pytest.approx([1.0], abs=1e-15)
        assert d.labels[0, 0] == 1.0

    def test_duplicated_nearest_counts_multiplicity(self):
        # the nearest support point was seen twice among four samples, so
        # k = 2 is already covered by the first neighborhood
        data = dataset([(0.1, 5.0), (0.1, 5.0), (1.0, 7.0), (2.0, 8.0)])
        m = boro.empirical_model(data)
        prox = boro.mahalanobis_proximity(data)
        ln = boro.NnLearner(boro.get_smoother("naive"), 1.0, 2, prox)
        chain = boro.build_neighborhoods(prox, m, np.array([0.0]))
        j = select_neighborhood(chain, 2, m.n)
        assert j == 1
        d = boro.nn_contextualize(ln, m, np.array([0.0]))
        assert d.weights == pytest.approx([1.0])
        assert d.labels[0, 0] == 5.0

    def test_selection_satisfies_mass_inequalities(self):
        rng = np.random.default_rng(4)
        for _ in range(60):
            n = int(rng.integers(3, 12))
            reps = rng.integers(1, 3, size=n)
            base_x = rng.normal(size=n)
            base_y = rng.normal(size=n)
            X = np.repeat(base_x, reps)[:, None]
            Y = np.repeat(base_y, reps)[:, None]
            data = boro.Dataset(X, Y)
            m = boro.empirical_model(data)
            k = int(rng.integers(1, m.n + 1))
            chain = boro.build_neighborhoods(boro.mahalanobis_proximity(data), m, rng.normal(size=1))
            j = select_neighborhood(chain, k, m.n)
            assert chain.cum[j] >= k / m.n - 1e-12
            assert chain.cum[j - 1] <= (k - 1) / m.n + 1e-12

    def test_weights_normalized_and_nonnegative(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            data = boro.Dataset(rng.normal(size=(10, 2)), rng.normal(size=(10, 1)))
            m = boro.empirical_model(data)
            xbar = rng.normal(size=2)
            lw = boro.NwLearner(boro.get_smoother("gaussian"), 1.0)
            ln = boro.NnLearner(boro.get_smoother("gaussian"), 1.0,
                                int(rng.integers(1, 11)), boro.mahalanobis_proximity(data))
            for d in (boro.nw_contextualize(lw, m, xbar), boro.nn_contextualize(ln, m, xbar)):
                assert abs(d.weights.sum() - 1.0) <= 1e-10
                assert np.all(d.weights >= 0)

    def test_nn_naive_k_equals_n_is_marginal_bruteforce(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            n = int(rng.integers(2, 9))
            data = boro.Dataset(rng.normal(size=(n, 1)), rng.normal(size=(n, 1)))
            m = boro.empirical_model(data)
            ln = boro.NnLearner(boro.get_smoother("naive"), 1.0, n, boro.mahalanobis_proximity(data))
            d = boro.nn_contextualize(ln, m, rng.normal(size=1))
            marg = m.label_marginal()
            got = np.array(sorted(zip(d.labels[:, 0], d.weights)))
            want = np.array(sorted(zip(marg.labels[:, 0], marg.weights)))
            assert np.allclose(got, want, atol=1e-12)

    def test_k_larger_than_n_rejected(self):
        data = dataset([(0.0, 1.0), (1.0, 2.0)])
        m = boro.empirical_model(data)
        ln = boro.NnLearner(boro.get_smoother("naive"), 1.0, 3, boro.mahalanobis_proximity(data))
        with pytest.raises(ValueError):
            boro.nn_contextualize(ln, m, np.array([0.0]))

    def test_compact_window_empty_inside_neighborhood(self):
        data = dataset([(0.0, 1.0), (10.0, 2.0)])
        m = boro.empirical_model(data)
        ln = boro.NnLearner(boro.get_smoother("uniform"), 0.5, 1, boro.mahalanobis_proximity(data))
        with pytest.raises(EmptyContextWindow):
            boro.nn_contextualize(ln, m, np.array([4.0]))
