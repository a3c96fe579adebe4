"""Scikit-learn style wrappers around the factored solvers.

These classes exist so the algorithms compose with the wider ecosystem
(pipelines, clone, grid search): parameters live on ``__init__``, data flows
through ``fit``/``predict``/``transform``, and fitted state carries trailing
underscores.  All numerics are delegated to the library modules.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .model import NoiseConfig, ProblemInstance
from .solver import SolverConfig, extract_estimate, solve
from .spca import empirical_covariance, spca_solve

__all__ = ["SparsePhaseRetrieval", "AtomicSparsePCA"]


class SparsePhaseRetrieval(RegressorMixin, BaseEstimator):
    """Recover an s-sparse signal from quadratic measurements y_i ~ <x_i, beta>^2.

    Parameters mirror the solver configuration; ``fit`` runs the factored
    atom-adding heuristic and exposes the extracted signal as ``coef_``
    (defined up to a global sign).

    Example
    -------
    >>> est = SparsePhaseRetrieval(lam=0.01, s=3).fit(X, y)
    >>> est.coef_           # recovered signal
    >>> est.predict(X)      # fitted quadratic responses
    """

    def __init__(
        self,
        lam=0.01,
        s=5,
        symmetric=False,
        max_rank=32,
        inner_tol=1e-7,
        stationarity_tol=1e-4,
        max_inner_iters=500,
        max_outer_iters=100,
        epsilon0=1.0,
        backtrack_factor=0.5,
    ):
        self.lam = lam
        self.s = s
        self.symmetric = symmetric
        self.max_rank = max_rank
        self.inner_tol = inner_tol
        self.stationarity_tol = stationarity_tol
        self.max_inner_iters = max_inner_iters
        self.max_outer_iters = max_outer_iters
        self.epsilon0 = epsilon0
        self.backtrack_factor = backtrack_factor

    def _solver_config(self) -> SolverConfig:
        return SolverConfig(
            lam=self.lam,
            s=self.s,
            symmetric=self.symmetric,
            max_rank=self.max_rank,
            inner_tol=self.inner_tol,
            stationarity_tol=self.stationarity_tol,
            max_inner_iters=self.max_inner_iters,
            max_outer_iters=self.max_outer_iters,
            epsilon0=self.epsilon0,
            backtrack_factor=self.backtrack_factor,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        inst = ProblemInstance(X, y, NoiseConfig("none"))
        F, diag = solve(inst, self._solver_config())
        self.factors_ = F
        self.diagnostics_ = diag
        self.converged_ = diag.converged
        if F.rank:
            self.coef_, self.sigma1_ = extract_estimate(F)
        else:
            self.coef_, self.sigma1_ = np.zeros(X.shape[1]), 0.0
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return (X @ self.coef_) ** 2


class AtomicSparsePCA(TransformerMixin, BaseEstimator):
    """Sparse leading-direction estimator on the empirical covariance (experimental).

    ``fit`` centers the data, estimates the covariance, and runs the
    trace-constrained symmetric factored heuristic; ``component_`` holds the
    unit-norm leading direction and ``transform`` projects onto it.
    """

    def __init__(self, lam=0.1, s=5, max_rank=16, max_outer_iters=50):
        self.lam = lam
        self.s = s
        self.max_rank = max_rank
        self.max_outer_iters = max_outer_iters

    def fit(self, X, y=None):
        X = check_array(X)
        cov = empirical_covariance(X)
        cfg = SolverConfig(
            lam=max(self.lam, 1e-12),
            s=self.s,
            symmetric=True,
            max_rank=self.max_rank,
            max_outer_iters=self.max_outer_iters,
        )
        F, diag = spca_solve(cov.sigma_hat, self.lam, self.s, cfg)
        self.factors_ = F
        self.diagnostics_ = diag
        self.mean_ = X.mean(axis=0)
        if F.rank:
            beta_hat, _ = extract_estimate(F)
            norm = np.linalg.norm(beta_hat)
            self.component_ = beta_hat / norm if norm else beta_hat
        else:
            self.component_ = np.zeros(X.shape[1])
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "component_")
        X = check_array(X)
        return (X - self.mean_) @ self.component_[:, None]
