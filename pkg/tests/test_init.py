import numpy as np
import pytest

from betafact.initialization import (
    InitSpec,
    init_factors_kmeans,
    init_internal_random,
    init_proportions_random,
    initialize,
    kmeans,
    proportions_from_labels,
)
from betafact.io import write_matrix
from betafact.models import ModelSpec, check_constraints


def same_columns_up_to_permutation(A, B):
    a = sorted(map(tuple, np.round(A.T, 12)))
    b = sorted(map(tuple, np.round(B.T, 12)))
    return a == b


class TestKMeans:
    def test_separated_clusters(self):
        rng = np.random.default_rng(0)
        centres = rng.uniform(0, 10, size=(5, 3))
        Y = np.repeat(centres, 20, axis=1)[:, rng.permutation(60)]
        M, labels = init_factors_kmeans(Y, 3, seed=1)
        assert same_columns_up_to_permutation(M, centres)
        assert np.bincount(labels).tolist() == [20, 20, 20]

    def test_n_equals_k(self):
        Y = np.random.default_rng(1).uniform(size=(4, 5))
        M, _ = init_factors_kmeans(Y, 5, seed=0)
        assert same_columns_up_to_permutation(M, Y)

    def test_deterministic(self):
        Y = np.random.default_rng(2).uniform(size=(6, 200))
        a, _ = init_factors_kmeans(Y, 4, seed=7)
        b, _ = init_factors_kmeans(Y, 4, seed=7)
        np.testing.assert_array_equal(a, b)

    def test_empty_cluster_reseeded(self):
        # duplicated points make k-means++ pick a repeated centre, leaving
        # one cluster empty until it is moved to the farthest point
        pts = np.array([[0.0], [0.0], [0.0], [10.0]])
        centres, labels = kmeans(pts, 3, seed=0)
        assert len(set(labels.tolist())) >= 2
        assert 10.0 in centres[:, 0]

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            init_factors_kmeans(np.ones((3, 2)), 3)

    def test_label_smoothing(self):
        A = proportions_from_labels(np.array([0, 2, 1]), 3, smoothing=0.3)
        np.testing.assert_allclose(A.sum(axis=0), 1.0, atol=1e-15)
        np.testing.assert_allclose(A[:, 1], [0.1, 0.1, 0.8])


class TestRandom:
    def test_stochastic_columns(self):
        A = init_proportions_random(4, 100, seed=3, stochastic=True)
        np.testing.assert_allclose(A.sum(axis=0), 1.0, atol=1e-12)

    def test_range_and_seed(self):
        A = init_proportions_random(4, 100, seed=3, stochastic=False)
        assert np.all((A > 0) & (A < 1))
        np.testing.assert_array_equal(A, init_proportions_random(4, 100, seed=3, stochastic=False))

    def test_internal(self):
        B = init_internal_random(2, 50, seed=4, scale=0.3)
        assert np.all((B >= 0) & (B < 0.3))
        np.testing.assert_array_equal(B, init_internal_random(2, 50, seed=4, scale=0.3))
        with pytest.raises(ValueError):
            init_internal_random(2, 5, scale=0.0)


class TestInitialize:
    @pytest.mark.parametrize("kind", ["nmf", "lmm", "slmm"])
    @pytest.mark.parametrize("method", ["kmeans", "random"])
    def test_feasible(self, kind, method):
        rng = np.random.default_rng(5)
        Y = rng.uniform(0.0, 2.0, size=(10, 80))
        V = rng.uniform(size=(10, 2))
        spec = ModelSpec(kind, 1.0)
        theta = initialize(Y, spec, 3, InitSpec(method=method, seed=1), V=V)
        assert check_constraints(spec, theta) == []
        assert theta.sbf_pinned == (kind == "slmm")
        again = initialize(Y, spec, 3, InitSpec(method=method, seed=1), V=V)
        np.testing.assert_array_equal(theta.A, again.A)

    def test_from_file(self, tmp_path):
        rng = np.random.default_rng(6)
        Y = rng.uniform(size=(5, 12))
        M = rng.uniform(size=(5, 2))
        A = rng.dirichlet(np.ones(2), size=12).T
        write_matrix(tmp_path / "M.bfmat", M)
        write_matrix(tmp_path / "A.bfmat", A)
        theta = initialize(Y, ModelSpec("lmm", 1.0), 2,
                           InitSpec(method="file", m_path=str(tmp_path / "M.bfmat"), a_path=str(tmp_path / "A.bfmat")))
        np.testing.assert_array_equal(theta.M, M)
        np.testing.assert_array_equal(theta.A, A)

    def test_infeasible_file_rejected(self, tmp_path):
        rng = np.random.default_rng(7)
        Y = rng.uniform(size=(5, 12))
        write_matrix(tmp_path / "M.bfmat", rng.uniform(size=(5, 2)))
        write_matrix(tmp_path / "A.bfmat", np.full((2, 12), 0.7))
        spec = InitSpec(method="file", m_path=str(tmp_path / "M.bfmat"), a_path=str(tmp_path / "A.bfmat"))
        with pytest.raises(ValueError, match="constraints"):
            initialize(Y, ModelSpec("lmm", 1.0), 2, spec)
        with pytest.raises(ValueError, match="shape"):
            initialize(Y, ModelSpec("lmm", 1.0), 3, spec)

    def test_slmm_needs_basis(self):
        with pytest.raises(ValueError, match="basis"):
            initialize(np.ones((4, 6)), ModelSpec("slmm", 1.0), 2, InitSpec(method="random"))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            InitSpec(method="kmeans", kmeans_iters=0)
        with pytest.raises(ValueError):
            InitSpec(method="file")
