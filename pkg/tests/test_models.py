import numpy as np
import pytest

from betafact.models import (
    DataMatrix,
    ModelKind,
    ModelSpec,
    Theta,
    check_constraints,
    evaluate_model,
    l21_norm,
    objective,
)


def lmm_state(rng, L=6, N=9, K=3):
    M = rng.uniform(0.1, 1.0, size=(L, K))
    A = rng.dirichlet(np.ones(K), size=N).T
    return M, A


class TestTypes:
    def test_spec_lambda_only_for_slmm(self):
        with pytest.raises(ValueError):
            ModelSpec("lmm", 1.0, lam=0.1)
        with pytest.raises(ValueError):
            ModelSpec("slmm", 1.0, lam=-1.0)
        assert ModelSpec("slmm", 1.0, lam=0.1).lam == 0.1
        assert ModelSpec("nmf", 2).kind is ModelKind.NMF

    def test_stochastic_flag(self):
        assert not ModelSpec("nmf", 1).stochastic
        assert ModelSpec("lmm", 1).stochastic
        assert ModelSpec("slmm", 1).stochastic

    def test_data_matrix(self):
        d = DataMatrix([[1.0, 2.0]], frame_durations=[3.0])
        np.testing.assert_array_equal(np.asarray(d), [[1.0, 2.0]])
        assert d.shape == (1, 2)
        with pytest.raises(ValueError):
            DataMatrix([[-1.0]])
        with pytest.raises(ValueError):
            DataMatrix([[1.0]], frame_durations=[1.0, 2.0])
        with pytest.raises(ValueError):
            DataMatrix(np.zeros((0, 3)))


class TestEvaluateModel:
    def test_rank_one_ones(self):
        np.testing.assert_array_equal(evaluate_model(np.ones((4, 1)), np.ones((1, 5))), np.ones((4, 5)))

    def test_slmm_hand_expansion(self):
        M = np.eye(2)
        A = np.array([[0.5, 1.0], [0.5, 0.0]])
        V = np.array([[1.0], [2.0]])
        B = np.array([[0.1, 0.0]])
        expected = M @ A + np.array([[0.05, 0.0], [0.1, 0.0]])
        np.testing.assert_allclose(evaluate_model(M, A, V, B), expected, rtol=0, atol=1e-15)

    def test_zero_variability_is_lmm(self):
        rng = np.random.default_rng(0)
        M, A = lmm_state(rng)
        V = rng.uniform(size=(6, 2))
        np.testing.assert_array_equal(evaluate_model(M, A, V, np.zeros((2, 9))), evaluate_model(M, A))

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            evaluate_model(np.ones((3, 2)), np.ones((3, 4)))
        with pytest.raises(ValueError):
            evaluate_model(np.ones((3, 2)), np.ones((2, 4)), V=np.ones((3, 1)))
        with pytest.raises(ValueError):
            evaluate_model(np.ones((3, 2)), np.ones((2, 4)), np.ones((3, 1)), np.ones((1, 5)))


class TestObjective:
    def test_exact_fit_is_zero(self):
        rng = np.random.default_rng(1)
        M, A = lmm_state(rng)
        for beta in (0.0, 0.5, 1.0, 2.0):
            assert objective(M @ A, ModelSpec("lmm", beta), Theta(M, A)) == pytest.approx(0.0, abs=1e-12)

    def test_l21_hand(self):
        B = np.array([[3.0, 0.0], [4.0, 0.0]])
        assert l21_norm(B) == 5.0
        M = np.ones((2, 1))
        A = np.ones((1, 2))
        V = np.zeros((2, 2))
        Y = M @ A
        assert objective(Y, ModelSpec("slmm", 2.0, lam=2.0), Theta(M, A, V, B)) == 10.0

    def test_euclidean_nmf_oracle(self):
        rng = np.random.default_rng(2)
        M = rng.uniform(size=(5, 2))
        A = rng.uniform(size=(2, 7))
        Y = rng.uniform(size=(5, 7))
        ref = 0.5 * np.sum((Y - M @ A) ** 2)
        assert objective(Y, ModelSpec("nmf", 2.0), Theta(M, A)) == pytest.approx(ref, rel=1e-12)

    def test_label_switching_invariance(self):
        rng = np.random.default_rng(3)
        M, A = lmm_state(rng, K=4)
        V = rng.uniform(size=(6, 2))
        B = rng.uniform(size=(2, 9))
        Y = rng.uniform(0.1, 1.0, size=(6, 9))
        spec = ModelSpec("slmm", 1.5, lam=0.3)
        perm = [0, 3, 1, 2]  # factor 0 carries the variability and stays put
        J = objective(Y, spec, Theta(M, A, V, B))
        Jp = objective(Y, spec, Theta(M[:, perm], A[perm], V, B))
        assert Jp == pytest.approx(J, rel=1e-14)


class TestConstraints:
    def test_valid_lmm(self):
        M, A = lmm_state(np.random.default_rng(4))
        assert check_constraints(ModelSpec("lmm", 1), Theta(M, A)) == []

    def test_sum_to_one_violation(self):
        M, A = lmm_state(np.random.default_rng(5))
        A[:, 2] *= 0.9
        v = check_constraints(ModelSpec("lmm", 1), Theta(M, A))
        assert len(v) == 1
        assert (v[0].variable, v[0].rule, v[0].index) == ("A", "sum-to-one", (2,))
        assert v[0].magnitude == pytest.approx(0.1, abs=1e-12)

    def test_negative_b(self):
        M, A = lmm_state(np.random.default_rng(6))
        B = np.zeros((2, 9))
        B[1, 4] = -0.25
        v = check_constraints(ModelSpec("slmm", 1), Theta(M, A, np.ones((6, 2)), B))
        assert len(v) == 1
        assert (v[0].variable, v[0].rule, v[0].index, v[0].magnitude) == ("B", "nonnegativity", (1, 4), 0.25)

    def test_nmf_ignores_column_sums(self):
        assert check_constraints(ModelSpec("nmf", 1), Theta(np.ones((2, 1)), 3 * np.ones((1, 2)))) == []

    def test_slmm_missing_variability(self):
        M, A = lmm_state(np.random.default_rng(7))
        v = check_constraints(ModelSpec("slmm", 1), Theta(M, A))
        assert [x.rule for x in v] == ["missing"]

    def test_copy_is_deep(self):
        M, A = lmm_state(np.random.default_rng(8))
        t = Theta(M, A)
        c = t.copy()
        c.A[0, 0] = 99.0
        assert t.A[0, 0] != 99.0
