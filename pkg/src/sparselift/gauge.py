"""Mixed sparse/low-rank gauge machinery.

The regularizer acts on factored matrices B = sum_k u_k (x) v_k and charges
each factor pair the product theta_s(u, v) = g(u) * g(v) of the single-vector
gauge g(z) = ||z||_2 + ||z||_1 / sqrt(s).  Exact evaluation of the induced
matrix norm (the infimum over all factorizations) is not provided here: this
module only exposes upper bounds (the value of a *given* factorization, and
the coefficient sum of a constructive atomic decomposition), plus subgradient
constructions at rank-1 points and the closed-form proximal operator used by
the solver.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FactoredMatrix",
    "SubgradientSpec",
    "factor_gauge",
    "theta_s",
    "factorization_value",
    "sparse_split",
    "atomic_decompose",
    "w_beta",
    "subgradient_basic",
    "subgradient_family",
    "project_model_space",
    "prox_l2_l1",
]


def _check_sparsity(s) -> float:
    s = float(s)
    if not s > 0:
        raise ValueError(f"sparsity parameter must be positive, got {s}")
    return s


def _as_vector(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {z.shape}")
    return z


def factor_gauge(z, s) -> float:
    """Single-factor gauge g(z) = ||z||_2 + ||z||_1 / sqrt(s).

    Positively homogeneous, zero iff z = 0.  The product g(u) * g(v) is the
    price the regularizer charges a rank-1 factor pair (u, v).
    """
    s = _check_sparsity(s)
    z = _as_vector(z)
    return float(np.linalg.norm(z) + np.abs(z).sum() / np.sqrt(s))


def theta_s(u, v, s) -> float:
    """Pair gauge theta_s(u, v) = g(u) * g(v)."""
    u = _as_vector(u)
    v = _as_vector(v)
    if u.shape != v.shape:
        raise ValueError(f"factor shapes differ: {u.shape} vs {v.shape}")
    return factor_gauge(u, s) * factor_gauge(v, s)


def _gauge_cols(M: np.ndarray, s: float) -> np.ndarray:
    """g applied to each column of a p x r stack."""
    return np.linalg.norm(M, axis=0) + np.abs(M).sum(axis=0) / np.sqrt(s)


def theta_batch(U: np.ndarray, V: np.ndarray, s) -> np.ndarray:
    """theta_s for row-paired batches: returns g(U[t]) * g(V[t]) per row t."""
    s = _check_sparsity(s)
    gu = np.linalg.norm(U, axis=1) + np.abs(U).sum(axis=1) / np.sqrt(s)
    gv = np.linalg.norm(V, axis=1) + np.abs(V).sum(axis=1) / np.sqrt(s)
    return gu * gv


def bilinear_batch(W: np.ndarray, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """<W u_t, v_t> = v_t' W u_t for row-paired batches."""
    return np.einsum("ti,ti->t", U @ W.T, V)


@dataclass
class FactoredMatrix:
    """A matrix held as factor stacks: B = U @ V.T = sum_k u_k (x) v_k.

    Columns of U and V are the factor pairs.  When ``symmetric`` is set the
    two stacks must be entrywise equal (the PSD parameterization); symmetric
    construction aliases a single array so equality is exact by construction.
    """

    U: np.ndarray
    V: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
        self.V = np.atleast_2d(np.asarray(self.V, dtype=float))
        if self.U.shape != self.V.shape:
            raise ValueError(
                f"factor stacks must share shape, got {self.U.shape} vs {self.V.shape}"
            )
        if self.symmetric and self.U is not self.V and not np.array_equal(self.U, self.V):
            raise ValueError("symmetric factorization requires u_k == v_k entrywise")

    @classmethod
    def zero(cls, p: int, symmetric: bool = False) -> "FactoredMatrix":
        U = np.zeros((p, 0))
        return cls(U, U, symmetric)

    @classmethod
    def from_pairs(cls, pairs, p=None, symmetric: bool = False) -> "FactoredMatrix":
        pairs = list(pairs)
        if not pairs:
            if p is None:
                raise ValueError("empty factor list needs an explicit dimension p")
            return cls.zero(p, symmetric)
        U = np.column_stack([_as_vector(u) for u, _ in pairs])
        V = np.column_stack([_as_vector(v) for _, v in pairs])
        if symmetric:
            if not np.array_equal(U, V):
                raise ValueError("symmetric factorization requires u_k == v_k entrywise")
            return cls(U, U, True)
        return cls(U, V, False)

    @classmethod
    def from_single_factor(cls, U: np.ndarray) -> "FactoredMatrix":
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return cls(U, U, True)

    @property
    def p(self) -> int:
        return self.U.shape[0]

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    def pairs(self):
        return [(self.U[:, k], self.V[:, k]) for k in range(self.rank)]

    def to_dense(self) -> np.ndarray:
        if self.rank == 0:
            return np.zeros((self.p, self.p))
        return self.U @ self.V.T

    def copy(self) -> "FactoredMatrix":
        if self.symmetric:
            return FactoredMatrix.from_single_factor(self.U.copy())
        return FactoredMatrix(self.U.copy(), self.V.copy(), False)


def factorization_value(F: FactoredMatrix, s) -> float:
    """sum_k theta_s(u_k, v_k) for the given factorization.

    This is an upper bound on the mixed atomic norm of the represented
    matrix; the infimum over factorizations is not computable in general.
    """
    s = _check_sparsity(s)
    if F.rank == 0:
        return 0.0
    return float(np.dot(_gauge_cols(F.U, s), _gauge_cols(F.V, s)))


def sparse_split(z, s) -> list:
    """Split z into s-sparse pieces with disjoint supports summing to z.

    Coordinates are sorted by decreasing magnitude (ties: lower index first)
    and chunked into consecutive blocks of size s.  The construction satisfies
    sum_i ||z_i||_2 <= factor_gauge(z, s); all-zero blocks are dropped.
    """
    z = _as_vector(z)
    s = int(s)
    if s < 1:
        raise ValueError(f"split size must be a positive integer, got {s}")
    order = np.argsort(-np.abs(z), kind="stable")
    pieces = []
    for start in range(0, z.size, s):
        idx = order[start : start + s]
        if not np.any(z[idx]):
            break  # magnitudes are sorted, so all later blocks are zero too
        piece = np.zeros_like(z)
        piece[idx] = z[idx]
        pieces.append(piece)
    return pieces


def atomic_decompose(u, v, s) -> list:
    """Write u (x) v as sum_i a_i * (u_i (x) v_i) with unit-l2 s-sparse atoms.

    Returns a list of (coefficient, (u_atom, v_atom)) built from the cross
    product of sparse_split(u) and sparse_split(v).  The coefficients satisfy
    sum |a_i| <= theta_s(u, v).
    """
    u = _as_vector(u)
    v = _as_vector(v)
    if u.shape != v.shape:
        raise ValueError(f"factor shapes differ: {u.shape} vs {v.shape}")
    _check_sparsity(s)
    atoms = []
    for ui in sparse_split(u, s):
        nu = np.linalg.norm(ui)
        for vj in sparse_split(v, s):
            nv = np.linalg.norm(vj)
            atoms.append((float(nu * nv), (ui / nu, vj / nv)))
    return atoms


def w_beta(beta, s) -> np.ndarray:
    """The rank-1 subgradient factor beta/||beta||_2 + sign(beta)/sqrt(s).

    sign(0) = 0, so w_beta is supported on supp(beta).
    """
    s = _check_sparsity(s)
    beta = _as_vector(beta)
    nb = np.linalg.norm(beta)
    if nb == 0:
        raise ValueError("w_beta is undefined at beta = 0")
    return beta / nb + np.sign(beta) / np.sqrt(s)


def subgradient_basic(beta, s):
    """Basic subgradient at beta (x) beta, returned as the pair (w, w)."""
    w = w_beta(beta, s)
    return (w, w)


# ---------------------------------------------------------------------------
# Model subspaces at a rank-1 point beta (x) beta.
#
# I is the set of matrices supported on supp(beta) x supp(beta); T is the
# tangent-like set {x (x) beta + beta (x) y}.  The two orthogonal projectors
# commute (beta is supported on I), so intersections factor into products.
# ---------------------------------------------------------------------------

_SUBSPACE_TAGS = (
    "I",
    "I_perp",
    "T",
    "T_perp",
    "T_cap_I",
    "T_cap_I_perp",
    "T_perp_cap_I",
    "T_perp_cap_I_perp",
    "beta",
    "beta_perp",
)


def _support_mask(beta: np.ndarray) -> np.ndarray:
    # exact zero test: synthetic ground truths carry exact zeros off-support
    return beta != 0.0


def project_model_space(beta, A, subspace: str) -> np.ndarray:
    """Orthogonal projection of the matrix A onto a model subspace at beta.

    ``A`` may be dense (p x p) or a FactoredMatrix (densified).  Supported
    tags: I, I_perp, T, T_perp, T_cap_I, T_cap_I_perp, T_perp_cap_I,
    T_perp_cap_I_perp, beta (span of beta (x) beta), beta_perp (rows and
    columns orthogonal to beta).
    """
    beta = _as_vector(beta)
    if not np.any(beta):
        raise ValueError("model subspaces are undefined at beta = 0")
    if isinstance(A, FactoredMatrix):
        A = A.to_dense()
    A = np.asarray(A, dtype=float)
    p = beta.size
    if A.shape != (p, p):
        raise ValueError(f"expected a {p}x{p} matrix, got shape {A.shape}")
    if subspace not in _SUBSPACE_TAGS:
        raise ValueError(f"unknown subspace tag {subspace!r}; expected one of {_SUBSPACE_TAGS}")

    support = _support_mask(beta)
    mask = np.outer(support, support)
    Pb = np.outer(beta, beta) / np.dot(beta, beta)

    def proj_I(M):
        return np.where(mask, M, 0.0)

    def proj_T(M):
        PbM = Pb @ M
        return PbM + M @ Pb - PbM @ Pb

    if subspace == "I":
        return proj_I(A)
    if subspace == "I_perp":
        return A - proj_I(A)
    if subspace == "T":
        return proj_T(A)
    if subspace == "T_perp":
        return A - proj_T(A)
    if subspace == "T_cap_I":
        return proj_T(proj_I(A))
    if subspace == "T_cap_I_perp":
        return proj_T(A - proj_I(A))
    if subspace == "T_perp_cap_I":
        AI = proj_I(A)
        return AI - proj_T(AI)
    if subspace == "T_perp_cap_I_perp":
        AIc = A - proj_I(A)
        return AIc - proj_T(AIc)
    if subspace == "beta":
        return Pb @ A @ Pb
    # beta_perp: conjugation by I - Pb (rows and columns orthogonal to beta)
    Q = np.eye(p) - Pb
    return Q @ A @ Q


# ---------------------------------------------------------------------------
# Subgradient families at beta (x) beta.
# ---------------------------------------------------------------------------

_FAMILY3_CHECK_SEED = 0x5EED_F3
_FAMILY3_CHECK_PAIRS = 10_000


@dataclass
class SubgradientSpec:
    """Recipe for a subgradient of the mixed gauge at beta (x) beta.

    family selects the construction:
      * "basic":   W = w_beta (x) w_beta
      * "family1": W = W_beta + (w_beta (x) utilde + vtilde (x) w_beta)/sqrt(s)
                   with utilde, vtilde off-support and sup-norm <= 1
      * "family2": W = W_beta + w_perp with w_perp in T_perp, ||w_perp||_op <= 1
      * "family3": W = W_beta + P_{T_perp cap I_perp}(w_tilde) where w_tilde
                   satisfies <w_tilde u, v> <= theta_s(u, v)/5 (checked by
                   fixed-seed sampling; the condition is not finitely checkable)
    """

    beta: np.ndarray
    s: float
    family: str = "basic"
    utilde: np.ndarray | None = None
    vtilde: np.ndarray | None = None
    w_perp: np.ndarray | None = None
    w_tilde: np.ndarray | None = None


def _sample_pairs(p: int, count: int, rng: np.random.Generator, sparse_size: int):
    """Half Gaussian, half random-sparse (u, v) batches for sampling oracles."""
    U = rng.standard_normal((count, p))
    V = rng.standard_normal((count, p))
    half = count // 2
    m = count - half
    k = max(1, min(sparse_size, p))
    for M in (U, V):
        sparse = np.zeros((m, p))
        cols = rng.integers(0, p, size=(m, k))
        vals = rng.standard_normal((m, k))
        np.put_along_axis(sparse, cols, vals, axis=1)
        M[half:] = sparse
    return U, V


def subgradient_family(spec: SubgradientSpec) -> np.ndarray:
    """Build the dense subgradient matrix described by ``spec``.

    Raises ValueError naming the violated condition when the recipe's
    requirements do not hold.
    """
    beta = _as_vector(spec.beta)
    s = _check_sparsity(spec.s)
    w = w_beta(beta, s)
    W = np.outer(w, w)
    p = beta.size
    support = _support_mask(beta)

    if spec.family == "basic":
        return W

    if spec.family == "family1":
        ut = np.zeros(p) if spec.utilde is None else _as_vector(spec.utilde)
        vt = np.zeros(p) if spec.vtilde is None else _as_vector(spec.vtilde)
        for name, vec in (("utilde", ut), ("vtilde", vt)):
            if vec.shape != beta.shape:
                raise ValueError(f"family1 {name} has wrong shape {vec.shape}")
            if np.any(vec[support] != 0.0):
                raise ValueError(f"family1 {name} must vanish on the support of beta")
            if np.max(np.abs(vec), initial=0.0) > 1.0 + 1e-12:
                raise ValueError(f"family1 {name} must have sup-norm <= 1")
        return W + (np.outer(w, ut) + np.outer(vt, w)) / np.sqrt(s)

    if spec.family == "family2":
        if spec.w_perp is None:
            return W
        Wp = np.asarray(spec.w_perp, dtype=float)
        if Wp.shape != (p, p):
            raise ValueError(f"family2 w_perp has wrong shape {Wp.shape}")
        nF = np.linalg.norm(Wp)
        if nF > 0:
            resid = np.linalg.norm(Wp - project_model_space(beta, Wp, "T_perp"))
            if resid > 1e-10 * nF:
                raise ValueError("family2 w_perp must lie in T_perp (projection residual too large)")
        if np.linalg.norm(Wp, 2) > 1.0 + 1e-12:
            raise ValueError("family2 w_perp must have operator norm <= 1")
        return W + Wp

    if spec.family == "family3":
        if spec.w_tilde is None:
            raise ValueError("family3 requires w_tilde")
        Wt = np.asarray(spec.w_tilde, dtype=float)
        if Wt.shape != (p, p):
            raise ValueError(f"family3 w_tilde has wrong shape {Wt.shape}")
        rng = np.random.default_rng(_FAMILY3_CHECK_SEED)
        U, V = _sample_pairs(p, _FAMILY3_CHECK_PAIRS, rng, sparse_size=int(np.ceil(s)))
        vals = bilinear_batch(Wt, U, V)
        bound = theta_batch(U, V, s) / 5.0
        if np.any(vals > bound * (1.0 + 1e-9)):
            raise ValueError(
                "family3 w_tilde violates <w_tilde u, v> <= theta_s(u, v)/5 on sampled pairs"
            )
        return W + project_model_space(beta, Wt, "T_perp_cap_I_perp")

    raise ValueError(f"unknown subgradient family {spec.family!r}")


def prox_l2_l1(x, a, b) -> np.ndarray:
    """Minimize <x, y> + ||y||_2^2 / 2 + a ||y||_2 + b ||y||_1 over y.

    Closed form: soft-threshold -x at level b, then shrink the l2 norm by a
    (returning 0 when the thresholded vector's norm is at most a).
    """
    if a < 0 or b < 0:
        raise ValueError(f"prox weights must be nonnegative, got a={a}, b={b}")
    x = _as_vector(x)
    w = -np.sign(x) * np.maximum(np.abs(x) - b, 0.0)
    nw = np.linalg.norm(w)
    if nw <= a:
        return np.zeros_like(w)
    return (1.0 - a / nw) * w
