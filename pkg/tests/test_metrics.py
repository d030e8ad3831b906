import math

import numpy as np
import pytest

from betafact.metrics import align_factors, nmse, psnr, report
from betafact.phantom import PhantomSpec, generate


class TestPsnr:
    def test_exact_is_inf(self):
        X = np.ones((2, 2))
        assert psnr(X, X) == math.inf

    def test_zero_db(self):
        assert psnr([[1.0, 0.0]], [[1.0, 1.0]]) == 0.0

    def test_hand_case(self):
        X_star = np.array([[4.0, 1.0], [2.0, 3.0]])
        X_hat = X_star + np.array([[0.5, 0.0], [0.0, 0.0]])
        assert psnr(X_hat, X_star) == 10 * math.log10(64)
        assert psnr(X_hat, X_star) == pytest.approx(18.062, abs=5e-4)

    def test_shape_and_zero_truth(self):
        with pytest.raises(ValueError):
            psnr(np.ones((2, 2)), np.ones((2, 3)))
        with pytest.raises(ValueError):
            psnr(np.ones((2, 2)), np.zeros((2, 2)))

    def test_decreases_with_noise(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(10, 50))
        z = rng.standard_normal(X.shape)
        vals = [psnr(X + s * z, X) for s in (0.01, 0.03, 0.1, 0.3, 1.0)]
        assert np.all(np.diff(vals) < 0)


class TestNmse:
    def test_cases(self):
        t = np.array([[1.0, -2.0], [3.0, 0.5]])
        assert nmse(t, t) == 0.0
        assert nmse(2 * t, t) == 1.0
        assert nmse(np.zeros_like(t), t) == 1.0

    def test_zero_truth(self):
        with pytest.raises(ValueError):
            nmse(np.ones(3), np.zeros(3))

    def test_joint_permutation(self):
        rng = np.random.default_rng(1)
        a, b = rng.uniform(size=(2, 4, 6))
        p = rng.permutation(4)
        assert nmse(a[p], b[p]) == pytest.approx(nmse(a, b), rel=1e-15)


class TestAlign:
    def test_identity(self):
        M = np.random.default_rng(2).uniform(size=(10, 4))
        np.testing.assert_array_equal(align_factors(M, M), [0, 1, 2, 3])

    def test_swap(self):
        M = np.random.default_rng(3).uniform(size=(10, 4))
        np.testing.assert_array_equal(align_factors(M[:, [0, 2, 1, 3]], M), [0, 2, 1, 3])

    def test_planted_permutation_under_noise(self):
        rng = np.random.default_rng(4)
        _, gt = generate(PhantomSpec(N=50, K=4, kind="lmm"))
        perm = np.array([0, 3, 1, 2])
        M_hat = gt.M[:, perm] * 2.5 + rng.normal(0, 0.01, gt.M.shape)
        p = align_factors(M_hat, gt.M)
        np.testing.assert_allclose(M_hat[:, p] / 2.5, gt.M, atol=0.05)

    def test_first_factor_pinned(self):
        M = np.random.default_rng(5).uniform(size=(10, 3))
        swapped = M[:, [1, 0, 2]]
        assert align_factors(swapped, M, pin_first=True)[0] == 0
        np.testing.assert_array_equal(align_factors(swapped, M, pin_first=False), [1, 0, 2])


class TestReport:
    @pytest.mark.parametrize("kind", ["nmf", "lmm", "slmm"])
    def test_exact_recovery(self, kind):
        _, gt = generate(PhantomSpec(N=200, kind=kind, seed=1))
        rec = report(gt.theta(), gt)
        assert rec.psnr == math.inf
        for name in rec.FIELDS[1:]:
            val = getattr(rec, name)
            assert val == 0.0 or (math.isnan(val) and kind != "slmm" and name == "nmse_A1B")

    def test_permuted_estimate(self):
        _, gt = generate(PhantomSpec(N=200, kind="lmm", seed=2))
        theta = gt.theta(sbf_pinned=False)
        perm = [2, 0, 3, 1]
        theta.M, theta.A = theta.M[:, perm], theta.A[perm]
        rec = report(theta, gt)
        assert rec.nmse_A1 == 0.0 and rec.nmse_M2K == 0.0

    def test_zero_b_baseline(self):
        _, gt = generate(PhantomSpec(N=400, seed=3))
        theta = gt.theta()
        theta.B = np.zeros_like(theta.B)
        assert report(theta, gt).nmse_A1B == 1.0
