import numpy as np
import pytest

from sparselift.gauge import FactoredMatrix
from sparselift.model import (
    GroundTruth,
    NoiseConfig,
    ProblemInstance,
    apply_noise,
    forward_clean,
    generate_truth,
    lifted_forward,
    lifted_inner,
    load_instance,
    make_instance,
    sample_design,
    save_instance,
    trial_seed,
)


class TestGenerateTruth:
    def test_fully_dense(self):
        t = generate_truth(5, 5, 1.0, seed=1)
        assert np.count_nonzero(t.beta_star) == 5
        assert np.linalg.norm(t.beta_star) == pytest.approx(1.0, rel=1e-14)

    def test_single_spike(self):
        t = generate_truth(100, 1, 2.0, seed=2)
        assert np.count_nonzero(t.beta_star) == 1
        assert np.abs(t.beta_star).max() == pytest.approx(2.0, rel=1e-14)

    def test_determinism(self):
        a = generate_truth(50, 7, 1.0, seed=42)
        b = generate_truth(50, 7, 1.0, seed=42)
        np.testing.assert_array_equal(a.beta_star, b.beta_star)
        np.testing.assert_array_equal(a.support, b.support)

    def test_exact_zeros_off_support(self):
        t = generate_truth(30, 4, 1.0, seed=3)
        off = np.setdiff1d(np.arange(30), t.support)
        assert np.all(t.beta_star[off] == 0.0)

    def test_bad_sparsity(self):
        with pytest.raises(ValueError):
            generate_truth(5, 6, 1.0, seed=0)
        with pytest.raises(ValueError):
            generate_truth(5, 0, 1.0, seed=0)


class TestSampleDesign:
    def test_determinism_and_variation(self):
        a = sample_design(4, 3, seed=9)
        b = sample_design(4, 3, seed=9)
        c = sample_design(4, 3, seed=10)
        np.testing.assert_array_equal(a, b)
        assert np.abs(a - c).max() > 0

    def test_single_entry(self):
        x = sample_design(1, 1, seed=0)
        assert x.shape == (1, 1)

    def test_column_statistics(self):
        X = sample_design(100_000, 3, seed=5)
        var = X.var(axis=0)
        assert np.all(var > 0.97) and np.all(var < 1.03)
        assert np.all(np.abs(X.mean(axis=0)) < 5 / np.sqrt(100_000))

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            sample_design(0, 3, seed=0)


class TestForwardClean:
    def test_basis_signal(self, rng):
        X = rng.standard_normal((20, 6))
        beta = np.zeros(6)
        beta[0] = 1.0
        np.testing.assert_allclose(forward_clean(X, beta), X[:, 0] ** 2)

    def test_zero_signal(self, rng):
        X = rng.standard_normal((7, 4))
        np.testing.assert_array_equal(forward_clean(X, np.zeros(4)), np.zeros(7))

    def test_quadratic_homogeneity(self, rng):
        X = rng.standard_normal((10, 5))
        beta = rng.standard_normal(5)
        np.testing.assert_allclose(forward_clean(X, 3 * beta), 9 * forward_clean(X, beta), rtol=1e-13)

    def test_sign_invariance(self, rng):
        X = rng.standard_normal((10, 5))
        beta = rng.standard_normal(5)
        np.testing.assert_array_equal(forward_clean(X, beta), forward_clean(X, -beta))

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            forward_clean(rng.standard_normal((5, 4)), np.ones(3))


class TestApplyNoise:
    def test_sigma_zero_identity(self, rng):
        y = rng.random(10)
        out = apply_noise(y, NoiseConfig("gaussian", 0.0), seed=1)
        np.testing.assert_array_equal(out, y)

    def test_poisson_zero_mean(self):
        out = apply_noise(np.zeros(8), NoiseConfig("poisson"), seed=1)
        np.testing.assert_array_equal(out, np.zeros(8))

    def test_gaussian_residual_std(self):
        y = np.ones(100_000)
        out = apply_noise(y, NoiseConfig("gaussian", 0.05), seed=3)
        assert 0.049 <= (out - y).std() <= 0.051

    def test_poisson_negative_mean_rejected(self):
        with pytest.raises(ValueError):
            apply_noise(np.array([-0.1, 1.0]), NoiseConfig("poisson"), seed=0)

    def test_none_returns_copy(self, rng):
        y = rng.random(5)
        out = apply_noise(y, NoiseConfig("none"), seed=0)
        np.testing.assert_array_equal(out, y)
        assert out is not y

    def test_unknown_model_rejected(self):
        with pytest.raises(ValueError):
            NoiseConfig("cauchy")


class TestLiftedInner:
    def test_rank_one(self, rng):
        beta = rng.standard_normal(6)
        F = FactoredMatrix.from_pairs([(beta, beta)])
        x = rng.standard_normal(6)
        assert lifted_inner(x, F) == pytest.approx(float(x @ beta) ** 2, rel=1e-13)

    def test_empty(self, rng):
        F = FactoredMatrix.zero(5)
        assert lifted_inner(rng.standard_normal(5), F) == 0.0

    def test_dense_oracle(self, rng):
        # <x (x) x, sum u_k (x) v_k> via explicit p x p matrices
        for _ in range(50):
            p, r = 8, 3
            F = FactoredMatrix(rng.standard_normal((p, r)), rng.standard_normal((p, r)))
            x = rng.standard_normal(p)
            dense = float(np.sum(np.outer(x, x) * F.to_dense()))
            assert lifted_inner(x, F) == pytest.approx(dense, rel=1e-12, abs=1e-12)

    def test_forward_matches_rowwise(self, rng):
        X = rng.standard_normal((9, 7))
        F = FactoredMatrix(rng.standard_normal((7, 2)), rng.standard_normal((7, 2)))
        rows = np.array([lifted_inner(x, F) for x in X])
        np.testing.assert_allclose(lifted_forward(X, F), rows, rtol=1e-13)

    def test_shape_mismatch(self, rng):
        F = FactoredMatrix.zero(5)
        with pytest.raises(ValueError):
            lifted_inner(rng.standard_normal(4), F)


class TestInstances:
    def test_make_instance_reproducible(self):
        a = make_instance(p=20, s=3, n=15, noise=NoiseConfig("gaussian", 0.1), seed=77)
        b = make_instance(p=20, s=3, n=15, noise=NoiseConfig("gaussian", 0.1), seed=77)
        np.testing.assert_array_equal(a.design, b.design)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.truth.beta_star, b.truth.beta_star)

    def test_nonfinite_observations_rejected(self, rng):
        X = rng.standard_normal((4, 3))
        y = np.array([1.0, np.inf, 0.0, 2.0])
        with pytest.raises(ValueError):
            ProblemInstance(X, y)

    def test_truth_off_support_validation(self):
        with pytest.raises(ValueError):
            GroundTruth(np.array([1.0, 0.5, 0.0]), np.array([0]), 1.0)

    def test_trial_seed_mixing(self):
        base = 123456789
        seeds = {
            trial_seed(base, s, n, t)
            for s in (1, 2)
            for n in (100, 200)
            for t in (0, 1, 2)
        }
        assert len(seeds) == 12  # distinct across the small grid
        assert trial_seed(base, 2, 100, 1) == trial_seed(base, 2, 100, 1)

    def test_save_load_roundtrip(self, tmp_path):
        inst = make_instance(p=6, s=2, n=5, noise=NoiseConfig("gaussian", 0.3), seed=11)
        path = tmp_path / "inst.csv"
        save_instance(path, inst)
        back = load_instance(path)
        np.testing.assert_array_equal(back.design, inst.design)
        np.testing.assert_array_equal(back.y, inst.y)
        np.testing.assert_array_equal(back.truth.beta_star, inst.truth.beta_star)
        assert back.noise.model == "gaussian"
        assert back.noise.sigma == inst.noise.sigma
        assert back.seed == inst.seed

    def test_save_load_without_truth(self, tmp_path, rng):
        X = rng.standard_normal((4, 3))
        inst = ProblemInstance(X, (X @ np.ones(3)) ** 2, NoiseConfig("none"), None, seed=5)
        path = tmp_path / "inst.csv"
        save_instance(path, inst)
        back = load_instance(path)
        assert back.truth is None
        np.testing.assert_array_equal(back.design, inst.design)
