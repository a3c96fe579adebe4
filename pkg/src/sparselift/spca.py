"""Experimental sparse-PCA estimator on the trace ball.

Minimizes -<Sigma_hat, P> + lam * sum_k theta_s(u_k, u_k) over PSD iterates
P = sum_k u_k (x) u_k with tr(P) = sum_k ||u_k||^2 <= 1, via symmetric
proximal descent with a trace-ball projection, plus diagonal 1-sparse atom
addition.  The approach is flagged EXPERIMENTAL in its diagnostics: it is the
same machinery that works well for phase retrieval, applied to a problem
where it is known to be weaker.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .gauge import FactoredMatrix, _gauge_cols, factor_gauge
from .solver import (
    HistoryRow,
    SolveDiagnostics,
    SolverConfig,
    _symmetric_prox_descent,
    write_diagnostics,
)

__all__ = [
    "SpikedModel",
    "CovarianceEstimate",
    "empirical_covariance",
    "sample_spiked",
    "spca_objective",
    "spca_solve",
    "spca_stationarity_check",
    "write_spca_diagnostics",
]


@dataclass
class SpikedModel:
    """Spiked covariance: Sigma = sigma1 v1 (x) v1 + sigma2 (I - v1 (x) v1)."""

    p: int
    s: int
    n: int
    sigma1: float
    sigma2: float
    v1: np.ndarray
    mu: np.ndarray | None = None

    def __post_init__(self):
        self.v1 = np.asarray(self.v1, dtype=float)
        if self.v1.shape != (self.p,):
            raise ValueError(f"v1 must have shape ({self.p},), got {self.v1.shape}")
        if abs(np.linalg.norm(self.v1) - 1.0) > 1e-12:
            raise ValueError("v1 must be unit norm")
        if np.count_nonzero(self.v1) > self.s:
            raise ValueError("v1 must be s-sparse")
        if not self.sigma1 > self.sigma2 > 0:
            raise ValueError(f"need sigma1 > sigma2 > 0, got {self.sigma1}, {self.sigma2}")
        if self.mu is None:
            self.mu = np.zeros(self.p)
        else:
            self.mu = np.asarray(self.mu, dtype=float)


@dataclass
class CovarianceEstimate:
    sigma_hat: np.ndarray
    n: int

    def __post_init__(self):
        self.sigma_hat = np.asarray(self.sigma_hat, dtype=float)
        if np.abs(self.sigma_hat - self.sigma_hat.T).max() > 1e-12:
            raise ValueError("covariance estimate must be symmetric")


def empirical_covariance(samples) -> CovarianceEstimate:
    """Centered second-moment matrix (1/n) sum (x_i - xbar) (x) (x_i - xbar)."""
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("empirical covariance needs an n x p sample matrix with n >= 2")
    Xc = X - X.mean(axis=0)
    S = Xc.T @ Xc / X.shape[0]
    return CovarianceEstimate(0.5 * (S + S.T), X.shape[0])


def sample_spiked(model: SpikedModel, seed) -> np.ndarray:
    """n i.i.d. Gaussian rows with the spiked covariance (O(np) sampling)."""
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((model.n, model.p))
    # Sigma^{1/2} z = sqrt(sigma2) z + (sqrt(sigma1) - sqrt(sigma2)) <v1, z> v1
    coef = np.sqrt(model.sigma1) - np.sqrt(model.sigma2)
    return model.mu + np.sqrt(model.sigma2) * Z + coef * np.outer(Z @ model.v1, model.v1)


def _trace(F: FactoredMatrix) -> float:
    return float(np.sum(F.U * F.U))


def spca_objective(F: FactoredMatrix, sigma_hat, lam, s) -> float:
    """-<Sigma_hat, P> + lam * sum_k theta_s(u_k, u_k) on the trace ball."""
    if not F.symmetric:
        raise ValueError("spca objective requires a symmetric factorization")
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    tr = _trace(F)
    if tr > 1.0 + 1e-10:
        raise ValueError(f"trace constraint violated: sum ||u_k||^2 = {tr}")
    if F.rank == 0:
        return 0.0
    g = _gauge_cols(F.U, s)
    return float(-np.sum((sigma_hat @ F.U) * F.U) + lam * np.dot(g, g))


def _project_trace_ball(U: np.ndarray) -> np.ndarray:
    tr = float(np.sum(U * U))
    if tr <= 1.0:
        return U
    return U / np.sqrt(tr)


def spca_solve(sigma_hat, lam, s, cfg: SolverConfig | None = None):
    """Factored sparse-PCA heuristic; returns (FactoredMatrix, SolveDiagnostics).

    Starts from the best diagonal atom, alternates symmetric proximal descent
    (with trace-ball projection after every prox step) with diagonal 1-sparse
    atom addition, and stops when no diagonal direction fires or progress
    stalls.  Diagnostics carry an EXPERIMENTAL warning and per-iteration
    feasibility values (exposed by write_spca_diagnostics).
    """
    t0 = time.perf_counter()
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    if np.abs(sigma_hat - sigma_hat.T).max() > 1e-10:
        raise ValueError("sigma_hat must be symmetric")
    p = sigma_hat.shape[0]
    if cfg is None:
        cfg = SolverConfig(lam=max(lam, 1e-12), s=s, symmetric=True)
    lam = float(lam)
    warnings = ["EXPERIMENTAL: the factored heuristic is known to be weaker for sparse PCA"]

    def data_val(U):
        return float(-np.sum((sigma_hat @ U) * U))

    def data_grad(U):
        return -2.0 * (sigma_hat @ U)

    def full_obj(F):
        g = _gauge_cols(F.U, s)
        return data_val(F.U) + lam * float(np.dot(g, g))

    # init: leading eigenvector of sigma_hat restricted to the top-s diagonal
    # scores, embedded and unit-scaled (trace exactly 1, hence feasible)
    if not np.any(sigma_hat):
        F = FactoredMatrix.zero(p, symmetric=True)
    else:
        s_int = max(1, min(p, int(round(s))))
        order = np.argsort(-np.diag(sigma_hat), kind="stable")
        S = np.sort(order[:s_int])
        M = sigma_hat[np.ix_(S, S)]
        v = np.ones(s_int) / np.sqrt(s_int)
        for _ in range(100):
            w = M @ v
            nw = np.linalg.norm(w)
            if nw == 0:
                break
            w /= nw
            if np.linalg.norm(w - v) < 1e-8:
                v = w
                break
            v = w
        U = np.zeros((p, 1))
        U[S, 0] = v
        F = FactoredMatrix.from_single_factor(U)

    # spectral-norm scale for the initial step size
    op_norm = 1.0
    if np.any(sigma_hat):
        v = np.ones(p) / np.sqrt(p)
        for _ in range(20):
            w = sigma_hat @ v
            nw = np.linalg.norm(w)
            if nw == 0:
                break
            op_norm, v = nw, w / nw

    history = []
    feasibility = []
    converged = False
    obj = full_obj(F)
    obj_at_last_cert = np.inf
    threshold = lam * (1.0 + 1.0 / np.sqrt(s)) ** 2
    outer = 0
    while outer < cfg.max_outer_iters:
        outer += 1
        if F.rank > 0:
            U, obj, _ = _symmetric_prox_descent(
                F.U,
                data_val,
                data_grad,
                lam,
                s,
                step0=0.5 / max(op_norm, 1e-12),
                cfg=cfg,
                post_prox=_project_trace_ball,
            )
            keep = _gauge_cols(U, s) > 0
            F = FactoredMatrix.from_single_factor(U[:, keep])
        obj = full_obj(F)
        # diagonal atom trigger: lam-scaled variant of the stationarity display
        tr_p = _trace(F)
        g = _gauge_cols(F.U, s)
        slack = lam * float(np.dot(g, g)) - float(-data_val(F.U))
        fire_vals = np.diag(sigma_hat) + slack * 1.0 - threshold
        j = int(np.argmax(fire_vals))
        cert_val = float(np.diag(sigma_hat)[j] + slack)
        history.append(HistoryRow(outer, obj, F.rank, 0.0, cert_val))
        feasibility.append(tr_p)
        if fire_vals[j] <= 0:
            converged = True
            break
        if obj_at_last_cert - obj < 1e-10 * max(1.0, abs(obj)):
            warnings.append("diagonal certificate stalled; stopping flagged")
            break
        obj_at_last_cert = obj
        if F.rank >= cfg.max_rank:
            warnings.append("max_rank reached with diagonal certificate above threshold")
            break
        new_F = _add_diagonal_atom(F, sigma_hat, lam, s, j, cfg, obj)
        if new_F is None:  # no feasible decrease from this atom
            warnings.append("diagonal atom produced no decrease; stopping flagged")
            break
        F = new_F
    else:
        warnings.append("max_outer_iters reached")

    diag = SolveDiagnostics(
        converged=converged,
        outer_iters=outer,
        history=history,
        warnings=warnings,
        runtime_seconds=time.perf_counter() - t0,
        final_gap=0.0,
        final_certificate=None,
    )
    diag.feasibility = feasibility
    return F, diag


def _add_diagonal_atom(F, sigma_hat, lam, s, j, cfg, base_obj):
    """Append eps * e_j (x) e_j, projecting back to the trace ball; backtrack eps."""
    p = sigma_hat.shape[0]
    eps = cfg.epsilon0
    for _ in range(61):
        col = np.zeros((p, 1))
        col[j, 0] = eps
        U = np.hstack([F.U, col]) if F.rank else col
        U = _project_trace_ball(U)
        g = _gauge_cols(U, s)
        obj = float(-np.sum((sigma_hat @ U) * U)) + lam * float(np.dot(g, g))
        if obj < base_obj:
            return FactoredMatrix.from_single_factor(U)
        eps *= cfg.backtrack_factor
    return None


@dataclass
class StationarityReport:
    """Worst-case violations of the trace-ball optimality display.

    ``literal`` uses the display with theta_s(u, u) on the right-hand side;
    ``lam_scaled`` multiplies that side by lam (see module notes: the two
    variants bracket the intended condition).  Values <= 0 mean no violation.
    """

    literal: float
    lam_scaled: float
    worst_direction: int
    per_direction: np.ndarray = field(repr=False, default=None)


def spca_stationarity_check(F, sigma_hat, lam, s, two_sparse_pairs=()) -> StationarityReport:
    """Evaluate <Sigma u, u> + (lam * sum theta - <Sigma, P>) ||u||^2 vs theta_s(u, u).

    Checks every 1-sparse u = e_i plus optional 2-sparse directions
    (e_i +/- e_j)/sqrt(2) for (i, j) in ``two_sparse_pairs``; reports the
    maximal violation of the literal display and of its lam-scaled variant.
    """
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    p = sigma_hat.shape[0]
    if F.rank:
        g = _gauge_cols(F.U, s)
        reg = lam * float(np.dot(g, g))
        val = float(np.sum((sigma_hat @ F.U) * F.U))
    else:
        reg, val = 0.0, 0.0
    slack = reg - val

    dirs = [np.eye(p)[i] for i in range(p)]
    for (i, j) in two_sparse_pairs:
        for sign in (1.0, -1.0):
            u = np.zeros(p)
            u[i] = 1.0 / np.sqrt(2)
            u[j] = sign / np.sqrt(2)
            dirs.append(u)
    lhs = np.array([float(u @ sigma_hat @ u) + slack * float(u @ u) for u in dirs])
    theta = np.array([factor_gauge(u, s) ** 2 for u in dirs])
    literal = lhs - theta
    scaled = lhs - lam * theta
    worst = int(np.argmax(scaled))
    return StationarityReport(
        literal=float(np.max(literal)),
        lam_scaled=float(np.max(scaled)),
        worst_direction=worst,
        per_direction=scaled,
    )


def write_spca_diagnostics(path, diag) -> None:
    """Solver CSV schema plus the per-iteration feasibility column."""
    write_diagnostics(path, diag, extra_columns={"feasibility": diag.feasibility})
