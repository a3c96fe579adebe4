import numpy as np
import pytest

from sparselift.gauge import FactoredMatrix, _gauge_cols, factor_gauge, factorization_value, theta_s
from sparselift.model import NoiseConfig, ProblemInstance, make_instance, lifted_forward
from sparselift.solver import (
    CertificateInconsistency,
    NumericalFailure,
    SolverConfig,
    add_atom,
    certificate_1sparse,
    certificate_matrix,
    error_metric,
    extract_estimate,
    inner_minimize,
    objective,
    rebalance,
    residuals,
    solve,
    spectral_init,
    stationarity_gap,
    write_diagnostics,
)


def small_instance(p=10, s=2, n=25, sigma=0.0, seed=0, beta_norm=1.0):
    noise = NoiseConfig("gaussian", sigma) if sigma else NoiseConfig("none")
    return make_instance(p=p, s=s, n=n, noise=noise, beta_norm=beta_norm, seed=seed)


def dense_objective(inst, F, cfg):
    """Direct p x p evaluation (test oracle)."""
    B = F.to_dense()
    pred = np.array([float(np.sum(np.outer(x, x) * B)) for x in inst.design])
    data = 0.5 * np.sum((inst.y - pred) ** 2) / inst.n
    reg = cfg.lam * sum(theta_s(u, v, cfg.s) for u, v in F.pairs())
    return data + reg


class TestObjective:
    def test_empty_zero(self, rng):
        X = rng.standard_normal((5, 4))
        inst = ProblemInstance(X, np.zeros(5))
        cfg = SolverConfig(lam=0.1, s=2)
        assert objective(inst, FactoredMatrix.zero(4), cfg) == 0.0

    def test_truth_pair_noiseless(self):
        inst = small_instance(seed=3)
        beta = inst.truth.beta_star
        F = FactoredMatrix.from_pairs([(beta, beta)])
        cfg = SolverConfig(lam=0.05, s=2)
        assert objective(inst, F, cfg) == pytest.approx(
            0.05 * theta_s(beta, beta, 2), rel=1e-12
        )

    def test_dense_oracle(self, rng):
        for trial in range(30):
            p = int(rng.integers(2, 13))
            n = int(rng.integers(3, 31))
            r = int(rng.integers(1, 4))
            inst = small_instance(p=p, s=2, n=n, sigma=0.1, seed=trial)
            F = FactoredMatrix(rng.standard_normal((p, r)), rng.standard_normal((p, r)))
            cfg = SolverConfig(lam=0.3, s=2)
            got = objective(inst, F, cfg)
            want = dense_objective(inst, F, cfg)
            assert got == pytest.approx(want, rel=1e-10)


class TestSpectralInit:
    def test_alignment_statistical(self):
        # large-n noiseless with beta* = e_1: support found, angle <= 0.1 rad
        p, n = 50, 10_000
        rng = np.random.default_rng(8)
        X = rng.standard_normal((n, p))
        beta = np.zeros(p)
        beta[0] = 1.0
        y = (X @ beta) ** 2
        inst = ProblemInstance(X, y)
        F, warns = spectral_init(inst, SolverConfig(lam=0.01, s=1))
        assert not warns
        u = F.U[:, 0]
        assert np.abs(u[0]) > 0
        cosine = abs(u[0]) / np.linalg.norm(u)
        assert np.arccos(min(1.0, cosine)) <= 0.1

    def test_zero_observations_fallback(self, rng):
        X = rng.standard_normal((6, 5))
        inst = ProblemInstance(X, np.zeros(6))
        F, warns = spectral_init(inst, SolverConfig(lam=0.1, s=2))
        assert warns
        assert np.count_nonzero(F.U) == 1
        assert np.linalg.norm(F.U) == pytest.approx(1.0)

    def test_determinism(self):
        inst = small_instance(seed=4, sigma=0.1)
        cfg = SolverConfig(lam=0.1, s=2)
        F1, _ = spectral_init(inst, cfg)
        F2, _ = spectral_init(inst, cfg)
        np.testing.assert_array_equal(F1.U, F2.U)

    def test_symmetric_flag(self):
        inst = small_instance(seed=4)
        F, _ = spectral_init(inst, SolverConfig(lam=0.1, s=2, symmetric=True))
        assert F.symmetric and F.U is F.V


class TestInnerMinimize:
    def test_least_squares_oracle(self, rng):
        # lam ~ 0, rank 1, V fixed: the u-subproblem is ridge-free least squares
        p, n = 8, 60
        X = rng.standard_normal((n, p))
        v = rng.standard_normal(p)
        u0 = rng.standard_normal(p)
        beta = rng.standard_normal(p)
        y = (X @ beta) * (X @ v)  # exactly realizable: <x,u*><x,v> with u* = beta
        inst = ProblemInstance(X, y)
        cfg = SolverConfig(lam=1e-14, s=2, inner_tol=1e-14, max_inner_iters=4000)
        F = FactoredMatrix(u0.reshape(-1, 1), v.reshape(-1, 1))
        out = inner_minimize(inst, F, cfg, side="U")
        # normal-equations oracle: A u = y with A_ij = <x_i, v> x_i[j]
        A = (X @ v)[:, None] * X
        u_star = np.linalg.solve(A.T @ A, A.T @ y)
        grad = A.T @ (A @ out.U[:, 0] - y) / n
        assert np.linalg.norm(grad) <= 1e-6
        np.testing.assert_allclose(out.U[:, 0], u_star, atol=1e-5)
        np.testing.assert_array_equal(out.V[:, 0], v)

    def test_fixed_point_no_movement(self, rng):
        inst = small_instance(seed=5)
        cfg = SolverConfig(lam=0.05, s=2)
        F, _ = spectral_init(inst, cfg)
        F1 = inner_minimize(inst, F, cfg, "U")
        obj1 = objective(inst, F1, cfg)
        F2 = inner_minimize(inst, F1, cfg, "U")
        obj2 = objective(inst, F2, cfg)
        assert obj2 <= obj1 + 1e-12
        assert obj1 - obj2 <= max(cfg.inner_tol * abs(obj1), 1e-9)

    def test_objective_never_increases(self, rng):
        inst = small_instance(seed=6, sigma=0.2)
        cfg = SolverConfig(lam=0.02, s=2)
        F, _ = spectral_init(inst, cfg)
        before = objective(inst, F, cfg)
        for side in ("U", "V", "U"):
            F = inner_minimize(inst, F, cfg, side)
            after = objective(inst, F, cfg)
            assert after <= before + 1e-12
            before = after

    def test_symmetric_mode_contract(self):
        inst = small_instance(seed=7)
        cfg = SolverConfig(lam=0.05, s=2, symmetric=True)
        F, _ = spectral_init(inst, cfg)
        out = inner_minimize(inst, F, cfg, "U")
        assert out.symmetric
        np.testing.assert_array_equal(out.U, out.V)

    def test_zero_fixed_side_zeroes_free(self, rng):
        inst = small_instance(seed=8)
        cfg = SolverConfig(lam=0.05, s=2)
        U = rng.standard_normal((10, 2))
        V = np.zeros((10, 2))
        F = FactoredMatrix(U, V)
        out = inner_minimize(inst, F, cfg, "U")  # V fixed and zero
        np.testing.assert_array_equal(out.U, np.zeros((10, 2)))

    def test_bad_side(self):
        inst = small_instance()
        with pytest.raises(ValueError):
            inner_minimize(inst, FactoredMatrix.zero(10), SolverConfig(lam=0.1, s=2), "W")

    def test_nonfinite_gradient_raises(self, rng):
        X = rng.standard_normal((8, 5))
        X[3, 2] = np.inf  # poisoned design: the data gradient blows up
        inst = ProblemInstance(X, np.ones(8))
        F = FactoredMatrix(np.ones((5, 1)), np.ones((5, 1)))
        with pytest.raises(NumericalFailure):
            inner_minimize(inst, F, SolverConfig(lam=0.1, s=2), "U")


class TestRebalance:
    def test_hand_example(self):
        u = np.zeros(4)
        u[0] = 2.0
        v = np.zeros(4)
        v[0] = 0.5
        F = FactoredMatrix.from_pairs([(u, v)])
        out = rebalance(F, 1)
        np.testing.assert_allclose(out.U[:, 0], np.array([1.0, 0, 0, 0]), rtol=1e-14)
        np.testing.assert_allclose(out.V[:, 0], np.array([1.0, 0, 0, 0]), rtol=1e-14)
        np.testing.assert_allclose(out.to_dense(), F.to_dense(), rtol=1e-12)

    def test_zero_pair_deleted(self, rng):
        F = FactoredMatrix.from_pairs([(np.zeros(4), rng.standard_normal(4))])
        assert rebalance(F, 1).rank == 0

    def test_idempotent_on_balanced(self, rng):
        U = rng.standard_normal((6, 2))
        V = rng.standard_normal((6, 2))
        F1 = rebalance(FactoredMatrix(U, V), 2)
        F2 = rebalance(F1, 2)
        np.testing.assert_allclose(F2.U, F1.U, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(F2.V, F1.V, rtol=1e-12, atol=1e-15)

    def test_gauges_equalized_product_preserved(self, rng):
        for _ in range(20):
            F = FactoredMatrix(rng.standard_normal((7, 3)), rng.standard_normal((7, 3)))
            out = rebalance(F, 2)
            gu = _gauge_cols(out.U, 2)
            gv = _gauge_cols(out.V, 2)
            np.testing.assert_allclose(gu, gv, rtol=1e-10)
            np.testing.assert_allclose(out.to_dense(), F.to_dense(), rtol=1e-12, atol=1e-14)
            # theta_s preserved pairwise
            assert factorization_value(out, 2) == pytest.approx(
                factorization_value(F, 2), rel=1e-12
            )


class TestStationarityGap:
    def test_empty(self):
        inst = small_instance()
        assert stationarity_gap(inst, FactoredMatrix.zero(10), SolverConfig(lam=0.1, s=2)) == 0.0

    def test_truth_pair_zero_residual(self):
        inst = small_instance(seed=9)
        beta = inst.truth.beta_star
        F = FactoredMatrix.from_pairs([(beta, beta)])
        cfg = SolverConfig(lam=0.2, s=2)
        lam_theta = cfg.lam * theta_s(beta, beta, 2)
        # zero residual: the correlation term vanishes, gap = lam*theta / max(1, lam*theta)
        assert stationarity_gap(inst, F, cfg) == pytest.approx(
            lam_theta / max(1.0, lam_theta), rel=1e-12
        )

    def test_converged_solve_below_tol(self):
        inst = small_instance(p=30, s=3, n=120, sigma=0.05, seed=10)
        cfg = SolverConfig(lam=0.05, s=3)
        F, diag = solve(inst, cfg)
        assert stationarity_gap(inst, F, cfg) <= cfg.stationarity_tol


class TestCertificate:
    def test_zero_residual(self):
        inst = small_instance(seed=11)
        beta = inst.truth.beta_star
        F = FactoredMatrix.from_pairs([(beta, beta)])
        cfg = SolverConfig(lam=0.1, s=2)
        cert = certificate_1sparse(inst, F, cfg)
        assert cert.max_entry == pytest.approx(0.0, abs=1e-12)
        assert not cert.fired

    def test_hand_example(self):
        # one sample x = e1 + e2, residual 1: Z is all-ones on the {0,1} block
        X = np.array([[1.0, 1.0, 0.0]])
        y = np.array([1.0])
        inst = ProblemInstance(X, y)
        cfg = SolverConfig(lam=0.01, s=1)
        cert = certificate_1sparse(inst, FactoredMatrix.zero(3), cfg)
        assert cert.max_entry == pytest.approx(1.0)
        assert cert.location == (0, 0)  # lexicographic tie-break
        assert cert.threshold == pytest.approx((1 + 1) ** 2 * 0.01)

    def test_dense_oracle(self, rng):
        for trial in range(30):
            p = int(rng.integers(2, 13))
            inst = small_instance(p=p, s=2, n=int(rng.integers(3, 25)), sigma=0.3, seed=trial)
            r = int(rng.integers(0, 3))
            F = FactoredMatrix(rng.standard_normal((p, r)), rng.standard_normal((p, r)))
            cfg = SolverConfig(lam=0.1, s=2)
            Z = certificate_matrix(inst, F)
            resid = residuals(inst, F)
            Z_oracle = sum(
                resid[i] * np.outer(inst.design[i], inst.design[i]) for i in range(inst.n)
            ) / inst.n
            np.testing.assert_allclose(Z, Z_oracle, rtol=1e-10, atol=1e-12)
            cert = certificate_1sparse(inst, F, cfg)
            assert cert.max_entry == pytest.approx(Z_oracle.max(), rel=1e-12, abs=1e-12)

    def test_blocked_scan_matches_dense(self, rng, monkeypatch):
        import sparselift.solver as sv

        inst = small_instance(p=17, s=2, n=12, sigma=0.5, seed=3)
        cfg = SolverConfig(lam=0.1, s=2)
        F = FactoredMatrix.zero(17)
        full = certificate_1sparse(inst, F, cfg)
        monkeypatch.setattr(sv, "_DENSE_Z_MAX_ENTRIES", 40)  # force tiny column blocks
        blocked = certificate_1sparse(inst, F, cfg)
        assert blocked.max_entry == full.max_entry
        assert blocked.location == full.location

    def test_symmetric_diagonal_restriction(self):
        X = np.array([[1.0, 1.0]])
        y = np.array([1.0])
        inst = ProblemInstance(X, y)
        cfg = SolverConfig(lam=0.01, s=1, symmetric=True)
        cert = certificate_1sparse(inst, FactoredMatrix.zero(2, symmetric=True), cfg)
        assert cert.location[0] == cert.location[1]


class TestAddAtom:
    def test_strict_decrease_and_rank(self):
        inst = small_instance(p=12, s=2, n=40, seed=12)
        cfg = SolverConfig(lam=1e-3, s=2)
        F = FactoredMatrix.zero(12)
        cert = certificate_1sparse(inst, F, cfg)
        assert cert.fired
        before = objective(inst, F, cfg)
        F2 = add_atom(inst, F, cfg, cert.location)
        assert F2.rank == F.rank + 1
        assert objective(inst, F2, cfg) < before

    def test_scalar_closed_form_oracle(self):
        # p = 1, n = 1, x = 1, y = 1: optimum B = 1 - lam (1 + 1/sqrt(s))^2
        lam, s = 0.01, 1.0
        inst = ProblemInstance(np.array([[1.0]]), np.array([1.0]))
        cfg = SolverConfig(lam=lam, s=s, inner_tol=1e-14, stationarity_tol=1e-8)
        F, diag = solve(inst, cfg)
        b_star = 1 - lam * (1 + 1 / np.sqrt(s)) ** 2
        got_b = float(lifted_forward(inst.design, F)[0])
        assert got_b == pytest.approx(b_star, rel=1e-4)
        resid = 1 - got_b
        assert resid == pytest.approx(lam * (1 + 1 / np.sqrt(s)) ** 2, rel=1e-4)

    def test_symmetric_rejects_off_diagonal(self):
        inst = small_instance(seed=13)
        cfg = SolverConfig(lam=0.01, s=2, symmetric=True)
        F = FactoredMatrix.zero(10, symmetric=True)
        with pytest.raises(ValueError):
            add_atom(inst, F, cfg, (0, 1))

    def test_inconsistent_certificate_raises(self):
        # residuals are zero: no descent exists at any location
        inst = small_instance(seed=14)
        beta = inst.truth.beta_star
        F = FactoredMatrix.from_pairs([(beta, beta)])
        cfg = SolverConfig(lam=0.1, s=2)
        with pytest.raises(CertificateInconsistency):
            add_atom(inst, F, cfg, (0, 0))


class TestSolve:
    def test_noiseless_recovery_small(self):
        inst = make_instance(p=64, s=3, n=200, noise=NoiseConfig("none"), beta_norm=1.0, seed=7)
        lam = 1e-3 * float(np.abs(inst.y).max())
        F, diag = solve(inst, SolverConfig(lam=lam, s=3))
        beta_hat, _ = extract_estimate(F)
        err = error_metric(beta_hat, inst.truth.beta_star) / np.linalg.norm(inst.truth.beta_star)
        assert err <= 1e-2
        assert diag.converged

    def test_zero_observations_large_lam(self, rng):
        X = rng.standard_normal((20, 8))
        inst = ProblemInstance(X, np.zeros(20))
        F, diag = solve(inst, SolverConfig(lam=10.0, s=2))
        assert objective(inst, F, SolverConfig(lam=10.0, s=2)) == pytest.approx(0.0, abs=1e-20)
        assert F.rank == 0 or np.abs(F.to_dense()).max() < 1e-12

    def test_history_monotone(self):
        inst = small_instance(p=30, s=3, n=100, sigma=0.1, seed=15)
        F, diag = solve(inst, SolverConfig(lam=0.05, s=3))
        objs = [row.objective for row in diag.history]
        assert all(b <= a + 1e-10 for a, b in zip(objs, objs[1:]))

    def test_residual_state_consistency(self):
        inst = small_instance(p=20, s=2, n=60, sigma=0.05, seed=16)
        cfg = SolverConfig(lam=0.05, s=2)
        F, diag = solve(inst, cfg)
        r = residuals(inst, F)
        np.testing.assert_allclose(
            r, inst.y - lifted_forward(inst.design, F), rtol=1e-9, atol=1e-12
        )
        state = diag.final_state
        np.testing.assert_allclose(state.residuals, r, rtol=1e-9, atol=1e-15)
        assert state.objective == pytest.approx(objective(inst, F, cfg), rel=1e-12)
        assert state.outer_iter == diag.outer_iters
        assert state.history is diag.history

    def test_symmetric_mode_psd(self):
        inst = make_instance(p=24, s=2, n=90, noise=NoiseConfig("none"), seed=17)
        cfg = SolverConfig(lam=0.01, s=2, symmetric=True)
        F, diag = solve(inst, cfg)
        np.testing.assert_array_equal(F.U, F.V)
        if F.rank:
            eigs = np.linalg.eigvalsh(F.to_dense())
            assert eigs.min() >= -1e-10

    def test_scale_consistency(self):
        inst = make_instance(p=32, s=3, n=160, noise=NoiseConfig("none"), beta_norm=2.0, seed=3)
        lam = 0.08
        cfgA = SolverConfig(lam=lam, s=3, stationarity_tol=1e-6, inner_tol=1e-10)
        FA, dA = solve(inst, cfgA)
        bA, _ = extract_estimate(FA)
        c = 2.0
        instC = ProblemInstance(inst.design, inst.y * c * c, inst.noise, inst.truth, inst.seed)
        cfgC = SolverConfig(lam=lam * c * c, s=3, stationarity_tol=1e-6, inner_tol=1e-10)
        FC, dC = solve(instC, cfgC)
        bC, _ = extract_estimate(FC)
        assert dA.converged and dC.converged
        rel = min(np.linalg.norm(bC - c * bA), np.linalg.norm(bC + c * bA)) / (
            c * np.linalg.norm(bA)
        )
        assert rel <= 1e-6

    def test_certificate_soundness_at_convergence(self):
        inst = small_instance(p=25, s=3, n=90, sigma=0.05, seed=18)
        cfg = SolverConfig(lam=0.06, s=3)
        F, diag = solve(inst, cfg)
        assert diag.converged
        Z = certificate_matrix(inst, F)
        thr = (1 + 1 / np.sqrt(3)) ** 2 * cfg.lam
        assert Z.max() <= thr + 1e-8 * cfg.lam

    def test_diagnostics_csv(self, tmp_path):
        inst = small_instance(p=20, s=2, n=60, sigma=0.05, seed=19)
        F, diag = solve(inst, SolverConfig(lam=0.05, s=2))
        path = tmp_path / "diag.csv"
        write_diagnostics(path, diag)
        lines = path.read_text().splitlines()
        assert lines[0] == "iter,objective,rank,stationarity_gap,cert_max"
        assert len(lines) == len(diag.history) + 1
        first = lines[1].split(",")
        assert int(first[0]) == diag.history[0].iter
        assert float(first[1]) == diag.history[0].objective


class TestExtractEstimate:
    def test_rank_one_exact(self, rng):
        beta = rng.standard_normal(7)
        F = FactoredMatrix.from_pairs([(beta, beta)])
        beta_hat, sigma1 = extract_estimate(F)
        assert sigma1 == pytest.approx(float(beta @ beta), rel=1e-12)
        sign_fixed = beta if beta[np.argmax(np.abs(beta))] > 0 else -beta
        np.testing.assert_allclose(beta_hat, sign_fixed, rtol=1e-10, atol=1e-12)

    def test_dense_svd_oracle(self, rng):
        for _ in range(30):
            p = int(rng.integers(2, 13))
            F = FactoredMatrix(rng.standard_normal((p, 2)), rng.standard_normal((p, 2)))
            beta_hat, sigma1 = extract_estimate(F)
            B = F.to_dense()
            Bs = 0.5 * (B + B.T)
            Wl, sig, _ = np.linalg.svd(Bs)
            want = np.sqrt(sig[0]) * Wl[:, 0]
            if want[np.argmax(np.abs(want))] < 0:
                want = -want
            assert sigma1 == pytest.approx(sig[0], rel=1e-10)
            np.testing.assert_allclose(beta_hat, want, rtol=1e-8, atol=1e-10)

    def test_scaling_homogeneity(self, rng):
        U = rng.standard_normal((6, 2))
        V = rng.standard_normal((6, 2))
        b1, s1 = extract_estimate(FactoredMatrix(U, V))
        c = 3.0
        b2, s2 = extract_estimate(FactoredMatrix(c * U, c * V))
        np.testing.assert_allclose(b2, c * b1, rtol=1e-10)
        assert s2 == pytest.approx(c * c * s1, rel=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            extract_estimate(FactoredMatrix.zero(5))

    def test_sign_convention(self, rng):
        beta = -np.abs(rng.standard_normal(5)) - 0.1  # all negative entries
        F = FactoredMatrix.from_pairs([(beta, beta)])
        beta_hat, _ = extract_estimate(F)
        assert beta_hat[np.argmax(np.abs(beta_hat))] > 0


class TestErrorMetric:
    def test_sign_flip_zero(self, rng):
        b = rng.standard_normal(6)
        assert error_metric(-b, b) == 0.0

    def test_zero_estimate(self, rng):
        b = rng.standard_normal(6)
        assert error_metric(np.zeros(6), b) == pytest.approx(np.linalg.norm(b))

    def test_orthogonal_perturbation(self, rng):
        b = rng.standard_normal(8)
        d = rng.standard_normal(8)
        d -= (d @ b) / (b @ b) * b
        d *= 1e-3 / np.linalg.norm(d)
        assert error_metric(b + d, b) == pytest.approx(np.linalg.norm(d), rel=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            error_metric(np.ones(3), np.ones(4))
