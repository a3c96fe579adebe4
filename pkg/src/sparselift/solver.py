"""Sparse phase retrieval solver on factored iterates.

Minimizes (1/2n) sum_i (y_i - <x_i (x) x_i, B>)^2 + lam * sum_k theta_s(u_k, v_k)
over B = sum_k u_k (x) v_k by alternating accelerated proximal-gradient passes
on the factor stacks, rebalancing, a first-order stationarity test per factor
pair, and a 1-sparse dual-certificate scan that appends a coordinate atom when
some entry of Z = (1/n) sum_i r_i x_i (x) x_i exceeds (1 + 1/sqrt(s))^2 * lam.
The certificate over 1-sparse atoms is a heuristic: diagnostics report its
value at termination rather than claiming global optimality.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .gauge import FactoredMatrix, _gauge_cols, factorization_value, prox_l2_l1
from .model import ProblemInstance, lifted_forward

__all__ = [
    "SolverConfig",
    "SolverState",
    "DualCertificate",
    "SolveDiagnostics",
    "NumericalFailure",
    "CertificateInconsistency",
    "residuals",
    "objective",
    "data_gradient",
    "spectral_init",
    "inner_minimize",
    "rebalance",
    "stationarity_gap",
    "certificate_1sparse",
    "certificate_matrix",
    "add_atom",
    "solve",
    "extract_estimate",
    "error_metric",
    "write_diagnostics",
]


class NumericalFailure(RuntimeError):
    """Non-finite quantities or a broken monotonicity invariant; carries diagnostics."""

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info


class CertificateInconsistency(RuntimeError):
    """Atom backtracking found no descent although the certificate fired.

    Signals a residual/Z computation bug rather than a modeling failure.
    """

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info


@dataclass
class SolverConfig:
    """Solver knobs; lam and s are required, the rest default sensibly."""

    lam: float
    s: float
    symmetric: bool = False
    max_rank: int = 32
    inner_tol: float = 1e-7
    stationarity_tol: float = 1e-4
    max_inner_iters: int = 500
    max_outer_iters: int = 100
    epsilon0: float = 1.0
    backtrack_factor: float = 0.5

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.s > 0:
            raise ValueError(f"s must be positive, got {self.s}")
        if self.max_rank < 1:
            raise ValueError(f"max_rank must be >= 1, got {self.max_rank}")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError(f"backtrack_factor must lie in (0, 1), got {self.backtrack_factor}")
        for name in ("inner_tol", "stationarity_tol", "epsilon0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class HistoryRow:
    iter: int
    objective: float
    rank: int
    stationarity_gap: float
    cert_max: float  # nan when the certificate was not evaluated at this step


@dataclass
class SolverState:
    """Mutable solve-time state: iterate, residuals, objective, history."""

    F: FactoredMatrix
    residuals: np.ndarray
    objective: float
    outer_iter: int = 0
    history: list = field(default_factory=list)


@dataclass
class DualCertificate:
    """Max entry of Z = (1/n) sum_i r_i x_i (x) x_i and the atom threshold."""

    max_entry: float
    location: tuple
    threshold: float

    @property
    def fired(self) -> bool:
        return self.max_entry > self.threshold


@dataclass
class SolveDiagnostics:
    converged: bool
    outer_iters: int
    history: list
    warnings: list
    runtime_seconds: float
    final_gap: float
    final_certificate: DualCertificate | None
    final_state: SolverState | None = None


def residuals(instance: ProblemInstance, F: FactoredMatrix) -> np.ndarray:
    """r_i = y_i - <x_i (x) x_i, B>."""
    return instance.y - lifted_forward(instance.design, F)


def objective(instance: ProblemInstance, F: FactoredMatrix, cfg: SolverConfig) -> float:
    """(1/2n) ||r||^2 + lam * sum_k theta_s(u_k, v_k)."""
    r = residuals(instance, F)
    return float(0.5 * np.dot(r, r) / instance.n + cfg.lam * factorization_value(F, cfg.s))


def data_gradient(instance: ProblemInstance, F: FactoredMatrix, side: str) -> np.ndarray:
    """Gradient of the data term with respect to one factor stack at F.

    For side "V" (U fixed) column k is -(1/n) sum_i r_i <x_i, u_k> x_i; the
    "U" side swaps the roles.
    """
    if side not in ("U", "V"):
        raise ValueError(f"side must be 'U' or 'V', got {side!r}")
    r = residuals(instance, F)
    X = instance.design
    C = X @ (F.V if side == "U" else F.U)
    return -X.T @ (r[:, None] * C) / instance.n


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def _power_iteration(matvec, dim, iters=100, tol=1e-8):
    """Leading eigenpair of a symmetric PSD operator; deterministic start."""
    v = np.ones(dim) / np.sqrt(dim)
    lam = 0.0
    for _ in range(iters):
        w = matvec(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, v
        w /= nw
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    lam = float(v @ matvec(v))
    return lam, v


def spectral_init(instance: ProblemInstance, cfg: SolverConfig):
    """Rank-1 spectral start: support by diagonal score, then restricted power iteration.

    Scores are (1/n) sum_i y_i x_i[j]^2; the top-s coordinates restrict the
    weighted second-moment matrix, whose leading eigenvector is rescaled so
    mean <x_i, u>^2 matches the mean positive observation.  Returns the
    one-pair iterate and a list of warnings (nonempty on degenerate input).
    """
    X, y = instance.design, instance.y
    n, p = X.shape
    warnings = []
    scores = (X * X).T @ y / n
    if not np.any(y):
        j = int(np.argmax(scores))
        u = np.zeros(p)
        u[j] = 1.0
        warnings.append("all-zero observations: canonical unit-vector init")
        return _one_pair(u, cfg.symmetric), warnings
    s_int = max(1, min(p, int(round(cfg.s))))
    # stable top-s: sort by (-score, index)
    order = np.argsort(-scores, kind="stable")
    S = np.sort(order[:s_int])
    XS = X[:, S]
    M = XS.T @ (y[:, None] * XS) / n
    _, v = _power_iteration(lambda z: M @ z, s_int)
    u = np.zeros(p)
    u[S] = v
    m = float(np.mean((XS @ v) ** 2))
    target = float(np.mean(np.maximum(y, 0.0)))
    if m > 0:
        u *= np.sqrt(target / m)
    if target == 0.0:
        warnings.append("no positive observations: zero-scale init")
    return _one_pair(u, cfg.symmetric), warnings


def _one_pair(u: np.ndarray, symmetric: bool) -> FactoredMatrix:
    col = u.reshape(-1, 1)
    if symmetric:
        return FactoredMatrix.from_single_factor(col)
    return FactoredMatrix(col, col.copy(), False)


# ---------------------------------------------------------------------------
# Inner minimization
# ---------------------------------------------------------------------------


def _estimate_lipschitz(X, C, n, iters=20):
    """Largest eigenvalue of the free-side data quadratic V -> (1/n) X'((X V * C row-sum) C)."""
    p, r = X.shape[1], C.shape[1]
    if r == 0 or not np.any(C):
        return 0.0
    V = np.ones((p, r)) / np.sqrt(p * r)
    lam = 0.0
    for _ in range(iters):
        z = np.einsum("ik,ik->i", X @ V, C)
        W = X.T @ (z[:, None] * C) / n
        nw = np.linalg.norm(W)
        if nw == 0.0:
            return 0.0
        lam = nw / np.linalg.norm(V)
        V = W / nw
    return float(lam)


def _prox_stack(point: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty_like(point)
    for k in range(point.shape[1]):
        out[:, k] = prox_l2_l1(-point[:, k], a[k], b[k])
    return out


def _fista_free_side(X, y, C, free0, lam, s, g_fixed, cfg):
    """Monotone FISTA on the convex free-side subproblem.

    Data term f(V) = (1/2n) ||y - rowsum(C * XV)||^2; regularizer
    lam * sum_k g_fixed[k] * g(v_k), handled column-wise by the closed-form
    prox.  Momentum restarts on any objective increase, so the returned
    iterate never has larger objective than free0.
    """
    n = X.shape[0]
    sqrt_s = np.sqrt(s)

    def f_val(V):
        pred = np.einsum("ik,ik->i", X @ V, C)
        d = y - pred
        return 0.5 * np.dot(d, d) / n

    def f_grad(V):
        pred = np.einsum("ik,ik->i", X @ V, C)
        return -X.T @ ((y - pred)[:, None] * C) / n

    def reg_val(V):
        return lam * float(np.dot(g_fixed, _gauge_cols(V, s)))

    L = _estimate_lipschitz(X, C, n)
    if L == 0.0:
        # fixed side is identically zero: the minimizing free side is zero
        return np.zeros_like(free0), 0.5 * np.dot(y, y) / n, 0

    step = 1.0 / L
    V = free0.copy()
    V_prev = V
    t_prev = 1.0
    obj = f_val(V) + reg_val(V)
    iters = 0
    for iters in range(1, cfg.max_inner_iters + 1):
        t = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_prev * t_prev))
        Y = V + ((t_prev - 1.0) / t) * (V - V_prev)
        restarted = False
        while True:
            G = f_grad(Y)
            if not np.all(np.isfinite(G)):
                raise NumericalFailure("non-finite gradient in inner minimization", rank=V.shape[1])
            fY = f_val(Y)
            # backtracking on the smooth part
            while True:
                a = step * lam * g_fixed
                cand = _prox_stack(Y - step * G, a, a / sqrt_s)
                D = cand - Y
                quad = fY + float(np.sum(G * D)) + 0.5 * float(np.sum(D * D)) / step
                if f_val(cand) <= quad + 1e-15 * max(1.0, abs(fY)) or step < 1e-18:
                    break
                step *= cfg.backtrack_factor
            new_obj = f_val(cand) + reg_val(cand)
            if new_obj <= obj + 1e-15 * max(1.0, abs(obj)):
                break
            if restarted:
                # cannot improve even without momentum: keep the current iterate
                cand, new_obj = V, obj
                break
            # discard momentum and retry from the last accepted iterate
            Y = V
            t = 1.0
            restarted = True
        V_prev, V = V, cand
        t_prev = t
        decrease = obj - new_obj
        obj = min(new_obj, obj)
        # relative stop keeps the solver equivariant under data/lam rescaling
        if decrease < cfg.inner_tol * abs(obj):
            break
    return V, obj, iters


def _symmetric_prox_descent(U0, data_val, data_grad, lam, s, step0, cfg, post_prox=None):
    """Monotone proximal descent over a symmetric factor stack.

    The regularizer lam * sum_k g(u_k)^2 is handled through its convex
    tangent model at the current iterate (prox coefficients 2 * lam * g(u_k),
    which matches the true gradient), with step halving until the true
    objective decreases.  ``post_prox`` (e.g. a trace-ball projection) is
    applied to every candidate before acceptance.
    """
    sqrt_s = np.sqrt(s)

    def reg_val(U):
        g = _gauge_cols(U, s)
        return lam * float(np.dot(g, g))

    def full(U):
        return data_val(U) + reg_val(U)

    U = U0.copy()
    U_prev = U
    t_prev = 1.0
    obj = full(U)
    step = step0
    iters = 0
    for iters in range(1, cfg.max_inner_iters + 1):
        t = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_prev * t_prev))
        Y = U + ((t_prev - 1.0) / t) * (U - U_prev)
        g_cur = _gauge_cols(U, s)
        accepted = None
        restarted = False
        while True:
            G = data_grad(Y)
            if not np.all(np.isfinite(G)):
                raise NumericalFailure("non-finite gradient in symmetric descent", rank=U.shape[1])
            a = step * lam * 2.0 * g_cur
            cand = _prox_stack(Y - step * G, a, a / sqrt_s)
            if post_prox is not None:
                cand = post_prox(cand)
            new_obj = full(cand)
            if new_obj <= obj + 1e-15 * max(1.0, abs(obj)):
                accepted = (cand, new_obj)
                break
            if not restarted:
                Y = U
                t = 1.0
                restarted = True
                continue
            step *= cfg.backtrack_factor
            if step < 1e-18:
                accepted = (U, obj)
                break
        cand, new_obj = accepted
        U_prev, U = U, cand
        t_prev = t
        decrease = obj - new_obj
        obj = min(new_obj, obj)
        if decrease < cfg.inner_tol * abs(obj):
            break
    return U, obj, iters


def inner_minimize(instance: ProblemInstance, F: FactoredMatrix, cfg: SolverConfig, side: str) -> FactoredMatrix:
    """One inner solve of the factored objective over the chosen side.

    Asymmetric mode fixes the opposite stack and runs monotone FISTA on the
    convex subproblem; symmetric mode runs monotone proximal descent on the
    (quartic) symmetric objective, keeping u_k = v_k.  The returned iterate's
    objective never exceeds the input's.
    """
    if side not in ("U", "V"):
        raise ValueError(f"side must be 'U' or 'V', got {side!r}")
    if F.rank == 0:
        return F
    X, y = instance.design, instance.y

    if cfg.symmetric:
        def data_val(U):
            pred = np.einsum("ik,ik->i", X @ U, X @ U)
            d = y - pred
            return 0.5 * float(np.dot(d, d)) / instance.n

        def data_grad(U):
            XU = X @ U
            pred = np.einsum("ik,ik->i", XU, XU)
            return -2.0 * X.T @ ((y - pred)[:, None] * XU) / instance.n

        C = X @ F.U
        L = 2.0 * _estimate_lipschitz(X, C, instance.n)
        step0 = 1.0 / L if L > 0 else 1.0
        U, _, _ = _symmetric_prox_descent(F.U, data_val, data_grad, cfg.lam, cfg.s, step0, cfg)
        return FactoredMatrix.from_single_factor(U)

    fixed = F.V if side == "U" else F.U
    free = F.U if side == "U" else F.V
    g_fixed = _gauge_cols(fixed, cfg.s)
    keep_free = free.copy()
    zero_cols = g_fixed == 0.0
    if np.any(zero_cols):
        keep_free[:, zero_cols] = 0.0  # zero fixed factor: zero the paired free factor
    C = X @ fixed
    new_free, _, _ = _fista_free_side(X, y, C, keep_free, cfg.lam, cfg.s, g_fixed, cfg)
    if side == "U":
        return FactoredMatrix(new_free, fixed.copy(), False)
    return FactoredMatrix(fixed.copy(), new_free, False)


# ---------------------------------------------------------------------------
# Rebalancing, stationarity, certificate, atoms
# ---------------------------------------------------------------------------


def rebalance(F: FactoredMatrix, s) -> FactoredMatrix:
    """Rescale pairs so g(u_k) = g(v_k); drop pairs with a zero factor.

    u_k (x) v_k is unchanged (the scale moves between the factors), and each
    pair's theta_s is exactly preserved.
    """
    if F.rank == 0:
        return F
    gu = _gauge_cols(F.U, s)
    gv = _gauge_cols(F.V, s)
    keep = (gu > 0) & (gv > 0)
    if F.symmetric:
        return FactoredMatrix.from_single_factor(F.U[:, keep])
    scale = np.sqrt(gv[keep] / gu[keep])
    return FactoredMatrix(F.U[:, keep] * scale, F.V[:, keep] / scale, False)


def _compress(F: FactoredMatrix, s) -> FactoredMatrix:
    """Re-factorize B through its thin SVD when that does not raise sum theta_s.

    Atom additions leave near-parallel factor pairs behind; the SVD merges
    them into one pair representing the same matrix.  The candidate is only
    accepted when its regularizer sum does not exceed the current one, so the
    objective is unchanged up to floating-point reconstruction error.
    """
    if F.rank <= 1:
        return F
    if F.symmetric:
        Q, R = np.linalg.qr(F.U)
        core = R @ R.T
        w, M = np.linalg.eigh(core)
        keep = w > max(w[-1], 0.0) * 1e-15
        if not np.any(keep):
            return FactoredMatrix.zero(F.p, symmetric=True)
        newU = Q @ (M[:, keep] * np.sqrt(w[keep]))
        cand = FactoredMatrix.from_single_factor(newU)
    else:
        Qu, Ru = np.linalg.qr(F.U)
        Qv, Rv = np.linalg.qr(F.V)
        W, sig, Mt = np.linalg.svd(Ru @ Rv.T)
        keep = sig > sig[0] * 1e-15 if sig.size else np.zeros(0, dtype=bool)
        if not np.any(keep):
            return FactoredMatrix.zero(F.p)
        root = np.sqrt(sig[keep])
        cand = FactoredMatrix(Qu @ (W[:, keep] * root), Qv @ (Mt.T[:, keep] * root), False)
    old_val = factorization_value(F, s)
    if factorization_value(cand, s) <= old_val * (1.0 + 1e-12):
        return cand
    return F


def stationarity_gap(instance: ProblemInstance, F: FactoredMatrix, cfg: SolverConfig, r=None) -> float:
    """Worst relative violation of the per-pair first-order condition.

    At stationarity, (1/n) sum_i r_i <x_i, u_k><x_i, v_k> = lam * theta_s(u_k, v_k)
    for every retained pair; the gap normalizes by max(1, lam * theta_s).
    """
    if F.rank == 0:
        return 0.0
    if r is None:
        r = residuals(instance, F)
    X = instance.design
    Cu, Cv = X @ F.U, X @ F.V
    corr = np.einsum("i,ik,ik->k", r, Cu, Cv) / instance.n
    target = cfg.lam * _gauge_cols(F.U, cfg.s) * _gauge_cols(F.V, cfg.s)
    return float(np.max(np.abs(corr - target) / np.maximum(1.0, target)))


_DENSE_Z_MAX_ENTRIES = 40_000_000  # ~320 MB of float64


def certificate_matrix(instance: ProblemInstance, F: FactoredMatrix, r=None) -> np.ndarray:
    """Dense Z = (1/n) design' diag(r) design (test oracle; O(n p^2))."""
    if r is None:
        r = residuals(instance, F)
    X = instance.design
    return X.T @ (r[:, None] * X) / instance.n


def certificate_1sparse(instance: ProblemInstance, F: FactoredMatrix, cfg: SolverConfig, r=None) -> DualCertificate:
    """Max entry of Z with its location; threshold (1 + 1/sqrt(s))^2 * lam.

    Ties break to the lexicographically smallest (i, j).  In symmetric mode
    the scan is restricted to the diagonal (the 1-sparse PSD atoms).  Large p
    is handled in column blocks so p x p storage stays bounded.
    """
    if r is None:
        r = residuals(instance, F)
    X = instance.design
    n, p = X.shape
    threshold = (1.0 + 1.0 / np.sqrt(cfg.s)) ** 2 * cfg.lam

    if cfg.symmetric:
        zdiag = (X * X).T @ r / n
        j = int(np.argmax(zdiag))
        return DualCertificate(float(zdiag[j]), (j, j), float(threshold))

    rX = r[:, None] * X
    if p * p <= _DENSE_Z_MAX_ENTRIES:
        Z = X.T @ rX / n
        flat = int(np.argmax(Z))
        i, j = divmod(flat, p)
        return DualCertificate(float(Z[i, j]), (i, j), float(threshold))

    block = max(1, _DENSE_Z_MAX_ENTRIES // p)
    best = (-np.inf, 0, 0)
    for j0 in range(0, p, block):
        Zb = X.T @ rX[:, j0 : j0 + block] / n
        flat = int(np.argmax(Zb))
        i, jloc = divmod(flat, Zb.shape[1])
        val = float(Zb[i, jloc])
        cand = (val, i, j0 + jloc)
        if val > best[0] or (val == best[0] and (cand[1], cand[2]) < (best[1], best[2])):
            best = cand
    return DualCertificate(best[0], (best[1], best[2]), float(threshold))


def add_atom(instance: ProblemInstance, F: FactoredMatrix, cfg: SolverConfig, location) -> FactoredMatrix:
    """Append the 1-sparse atom (eps e_j, eps e_i) for certificate location (i, j).

    eps backtracks from epsilon0 until the objective strictly decreases; when
    the certificate strictly exceeds its threshold a decrease exists for small
    eps, so exhausting 60 shrinks indicates an inconsistent residual/Z state.
    """
    i, j = location
    if cfg.symmetric and i != j:
        raise ValueError(f"symmetric mode accepts only diagonal atom locations, got {(i, j)}")
    X = instance.design
    n, p = X.shape
    r = residuals(instance, F)
    base_data = 0.5 * float(np.dot(r, r)) / n
    base_reg = cfg.lam * factorization_value(F, cfg.s)
    base_obj = base_data + base_reg
    # the new pair contributes eps^2 * x[:, j] * x[:, i] to the predictions
    cross = X[:, j] * X[:, i]
    atom_theta = (1.0 + 1.0 / np.sqrt(cfg.s)) ** 2
    eps = cfg.epsilon0
    for _ in range(61):
        e2 = eps * eps
        d = r - e2 * cross
        cand_obj = 0.5 * float(np.dot(d, d)) / n + base_reg + cfg.lam * e2 * atom_theta
        if cand_obj < base_obj:
            eu = np.zeros((p, 1))
            eu[j, 0] = eps
            if cfg.symmetric:
                return FactoredMatrix.from_single_factor(np.hstack([F.U, eu]))
            ev = np.zeros((p, 1))
            ev[i, 0] = eps
            return FactoredMatrix(np.hstack([F.U, eu]), np.hstack([F.V, ev]), False)
        eps *= cfg.backtrack_factor
    raise CertificateInconsistency(
        "atom backtracking found no objective decrease",
        location=(int(i), int(j)),
        base_objective=base_obj,
    )


# ---------------------------------------------------------------------------
# The outer loop
# ---------------------------------------------------------------------------


def solve(instance: ProblemInstance, cfg: SolverConfig):
    """Run the full heuristic; returns (FactoredMatrix, SolveDiagnostics).

    Alternates inner passes and rebalancing until the per-pair stationarity
    gap is small, then scans the 1-sparse certificate: below threshold means
    converged, otherwise an atom is added (until max_rank).  The recorded
    objective history is non-increasing; a violation raises NumericalFailure
    rather than returning silently.
    """
    t0 = time.perf_counter()
    state_warnings: list = []
    F, init_warnings = spectral_init(instance, cfg)
    state_warnings.extend(init_warnings)
    history: list = []
    converged = False
    final_cert = None
    gap = np.inf
    prev_obj = np.inf
    obj_at_last_cert = np.inf
    outer = 0
    while outer < cfg.max_outer_iters:
        outer += 1
        F = inner_minimize(instance, F, cfg, "U")
        if not cfg.symmetric:
            F = inner_minimize(instance, F, cfg, "V")
        F = rebalance(F, cfg.s)
        F = _compress(F, cfg.s)
        r = residuals(instance, F)
        obj = float(0.5 * np.dot(r, r) / instance.n + cfg.lam * factorization_value(F, cfg.s))
        if not np.isfinite(obj):
            raise NumericalFailure("non-finite objective", outer_iter=outer)
        if obj > prev_obj + 1e-10:
            raise NumericalFailure(
                "objective increased across outer iterations",
                previous=prev_obj,
                current=obj,
                outer_iter=outer,
            )
        prev_obj = obj
        gap = stationarity_gap(instance, F, cfg, r=r)
        if gap <= cfg.stationarity_tol:
            cert = certificate_1sparse(instance, F, cfg, r=r)
            final_cert = cert
            history.append(HistoryRow(outer, obj, F.rank, gap, cert.max_entry))
            if not cert.fired:
                converged = True
                break
            if obj_at_last_cert - obj < 1e-8 * max(1.0, abs(obj)):
                # a marginally active atom can pin the certificate a hair above
                # threshold; stop flagged instead of accumulating dead atoms
                state_warnings.append("certificate stalled above threshold at solver precision")
                break
            obj_at_last_cert = obj
            if F.rank >= cfg.max_rank:
                state_warnings.append("max_rank reached with certificate above threshold")
                break
            F = add_atom(instance, F, cfg, cert.location)
        else:
            history.append(HistoryRow(outer, obj, F.rank, gap, float("nan")))
    else:
        state_warnings.append("max_outer_iters reached before certificate convergence")

    final_r = residuals(instance, F)
    final_obj = float(
        0.5 * np.dot(final_r, final_r) / instance.n + cfg.lam * factorization_value(F, cfg.s)
    )
    diag = SolveDiagnostics(
        converged=converged,
        outer_iters=outer,
        history=history,
        warnings=state_warnings,
        runtime_seconds=time.perf_counter() - t0,
        final_gap=float(gap),
        final_certificate=final_cert,
        final_state=SolverState(
            F=F, residuals=final_r, objective=final_obj, outer_iter=outer, history=history
        ),
    )
    return F, diag


# ---------------------------------------------------------------------------
# Estimate extraction
# ---------------------------------------------------------------------------


def extract_estimate(F: FactoredMatrix):
    """Leading singular direction of the symmetrized iterate, without p x p work.

    Orthogonalizes the stacked factors (at most 2r columns), symmetrizes the
    small core, and reads off beta_hat = sqrt(sigma_1) * (leading vector).
    Sign convention: the largest-magnitude entry of beta_hat is positive.
    Returns (beta_hat, sigma_1).
    """
    if F.rank == 0:
        raise ValueError("cannot extract an estimate from an empty factorization")
    stack = np.concatenate([F.U, F.V], axis=1)
    Q, _ = np.linalg.qr(stack)
    Cu = Q.T @ F.U
    Cv = Q.T @ F.V
    core = Cu @ Cv.T
    core = 0.5 * (core + core.T)
    Wl, sig, _ = np.linalg.svd(core)
    sigma1 = float(sig[0])
    if sigma1 == 0.0:
        return np.zeros(F.p), 0.0
    beta = np.sqrt(sigma1) * (Q @ Wl[:, 0])
    k = int(np.argmax(np.abs(beta)))
    if beta[k] < 0:
        beta = -beta
    return beta, sigma1


def error_metric(beta_hat, beta_star) -> float:
    """Sign-invariant l2 distance min(||b - b*||, ||b + b*||)."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    beta_star = np.asarray(beta_star, dtype=float)
    if beta_hat.shape != beta_star.shape:
        raise ValueError(f"shape mismatch: {beta_hat.shape} vs {beta_star.shape}")
    return float(
        min(np.linalg.norm(beta_hat - beta_star), np.linalg.norm(beta_hat + beta_star))
    )


_CSV_FMT = "%.17g"


def write_diagnostics(path, diag: SolveDiagnostics, extra_columns=None) -> None:
    """Write the per-iteration history as CSV: iter,objective,rank,stationarity_gap,cert_max.

    ``extra_columns`` maps column name -> per-row values (appended in order),
    used by the sparse-PCA variant for its feasibility column.
    """
    cols = ["iter", "objective", "rank", "stationarity_gap", "cert_max"]
    extra = extra_columns or {}
    header = ",".join(cols + list(extra))
    lines = [header]
    for idx, row in enumerate(diag.history):
        vals = [
            str(row.iter),
            _CSV_FMT % row.objective,
            str(row.rank),
            _CSV_FMT % row.stationarity_gap,
            _CSV_FMT % row.cert_max,
        ]
        vals.extend(_CSV_FMT % extra[name][idx] for name in extra)
        lines.append(",".join(vals))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
