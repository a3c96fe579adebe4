"""Synthetic problem generation and the quadratic measurement operator.

Observations follow y_i = <x_i, beta*>^2 + noise with i.i.d. Gaussian design
rows.  Lifted inner products <x (x) x, B> are evaluated through the factors of
B, so no p x p matrix is ever materialized.
"""

from dataclasses import dataclass, field

import numpy as np

from .gauge import FactoredMatrix

__all__ = [
    "GroundTruth",
    "NoiseConfig",
    "ProblemInstance",
    "generate_truth",
    "sample_design",
    "forward_clean",
    "apply_noise",
    "lifted_inner",
    "lifted_forward",
    "make_instance",
    "trial_seed",
    "save_instance",
    "load_instance",
]

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One round of the splitmix64 mixer (public-domain constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def trial_seed(base_seed: int, s: int, n: int, trial: int) -> int:
    """Derive a per-trial 64-bit seed from (base_seed, s, n, trial).

    Chains splitmix64 over the fields, so grids can run trials in any order
    (or in parallel) and still draw identical data per cell.
    """
    h = int(base_seed) & _MASK64
    for v in (s, n, trial):
        h = _splitmix64(h ^ (int(v) & _MASK64))
    return h


@dataclass
class GroundTruth:
    """The hidden s-sparse signal of a synthetic instance."""

    beta_star: np.ndarray
    support: np.ndarray
    norm: float

    def __post_init__(self):
        self.beta_star = np.asarray(self.beta_star, dtype=float)
        self.support = np.asarray(self.support, dtype=int)
        off = np.setdiff1d(np.arange(self.beta_star.size), self.support)
        if np.any(self.beta_star[off] != 0.0):
            raise ValueError("beta_star must be exactly zero off its support")


@dataclass
class NoiseConfig:
    """Noise model tag: "none", "gaussian" (additive N(0, sigma^2)), or "poisson"."""

    model: str = "none"
    sigma: float = 0.0

    def __post_init__(self):
        if self.model not in ("none", "gaussian", "poisson"):
            raise ValueError(f"unknown noise model {self.model!r}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")


@dataclass
class ProblemInstance:
    """Design rows, observations, noise tag, and (synthetic) ground truth."""

    design: np.ndarray
    y: np.ndarray
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    truth: GroundTruth | None = None
    seed: int = 0

    def __post_init__(self):
        self.design = np.asarray(self.design, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.design.ndim != 2:
            raise ValueError(f"design must be 2-D, got shape {self.design.shape}")
        n, p = self.design.shape
        if n < 1 or p < 1:
            raise ValueError(f"need n >= 1 and p >= 1, got design shape {self.design.shape}")
        if self.y.shape != (n,):
            raise ValueError(f"observations must have shape ({n},), got {self.y.shape}")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("observations must be finite")

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]


def generate_truth(p: int, s: int, norm: float, seed) -> GroundTruth:
    """Draw an s-sparse signal: uniform support, Gaussian values, rescaled to ``norm``."""
    if not 1 <= s <= p:
        raise ValueError(f"need 1 <= s <= p, got s={s}, p={p}")
    if norm <= 0:
        raise ValueError(f"norm must be positive, got {norm}")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(p, size=s, replace=False))
    vals = rng.standard_normal(s)
    while np.linalg.norm(vals) == 0.0:  # essentially impossible, but keep the rescale exact
        vals = rng.standard_normal(s)
    vals *= norm / np.linalg.norm(vals)
    beta = np.zeros(p)
    beta[support] = vals
    return GroundTruth(beta, support, float(norm))


def sample_design(n: int, p: int, seed) -> np.ndarray:
    """n x p design with i.i.d. standard normal entries, reproducible by seed."""
    if n < 1 or p < 1:
        raise ValueError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, p))


def forward_clean(design, beta) -> np.ndarray:
    """Noiseless observations y_i = <x_i, beta>^2."""
    design = np.asarray(design, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if design.ndim != 2 or beta.shape != (design.shape[1],):
        raise ValueError(
            f"shape mismatch: design {design.shape} vs beta {beta.shape}"
        )
    return (design @ beta) ** 2


def apply_noise(y_clean, cfg: NoiseConfig, seed) -> np.ndarray:
    """Apply the configured noise model to clean observations."""
    y_clean = np.asarray(y_clean, dtype=float)
    if cfg.model == "none":
        return y_clean.copy()
    rng = np.random.default_rng(seed)
    if cfg.model == "gaussian":
        if cfg.sigma == 0.0:
            return y_clean.copy()
        return y_clean + cfg.sigma * rng.standard_normal(y_clean.shape)
    # poisson
    if np.any(y_clean < 0):
        raise ValueError("poisson noise requires nonnegative clean observations")
    return rng.poisson(y_clean).astype(float)


def lifted_inner(x, F: FactoredMatrix) -> float:
    """<x (x) x, sum_k u_k (x) v_k> = sum_k <x, u_k><x, v_k>; cost O(p r)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (F.p,):
        raise ValueError(f"shape mismatch: x {x.shape} vs factors of dimension {F.p}")
    if F.rank == 0:
        return 0.0
    return float(np.dot(x @ F.U, x @ F.V))


def lifted_forward(design: np.ndarray, F: FactoredMatrix) -> np.ndarray:
    """Row-wise lifted inner products <x_i (x) x_i, B> for the whole design."""
    if design.shape[1] != F.p:
        raise ValueError(
            f"shape mismatch: design {design.shape} vs factors of dimension {F.p}"
        )
    if F.rank == 0:
        return np.zeros(design.shape[0])
    return np.einsum("ik,ik->i", design @ F.U, design @ F.V)


def make_instance(
    p: int,
    s: int,
    n: int,
    noise: NoiseConfig | None = None,
    beta_norm: float = 1.0,
    seed: int = 0,
) -> ProblemInstance:
    """Generate a full synthetic instance from a single seed.

    The seed feeds one Generator consumed in a fixed order (truth, design,
    noise), so instances are bit-reproducible given (dimensions, config, seed).
    """
    noise = noise or NoiseConfig()
    rng = np.random.default_rng(seed)
    truth = generate_truth(p, s, beta_norm, rng)
    design = sample_design(n, p, rng)
    y = apply_noise(forward_clean(design, truth.beta_star), noise, rng)
    return ProblemInstance(design, y, noise, truth, seed=int(seed))


# ---------------------------------------------------------------------------
# Text serialization (cross-language debugging aid).
#
# Line 1: n,p,seed,noise,sigma,has_truth
# Line 2: the n observations
# Lines 3..n+2: design rows (p values each)
# Optional last line: beta_star (p values), present iff has_truth = 1
# ---------------------------------------------------------------------------

_FMT = "%.17g"


def _fmt_row(vals) -> str:
    return ",".join(_FMT % v for v in vals)


def save_instance(path, inst: ProblemInstance) -> None:
    """Write an instance in the documented CSV text format."""
    has_truth = int(inst.truth is not None)
    lines = [
        f"{inst.n},{inst.p},{inst.seed},{inst.noise.model},{_FMT % inst.noise.sigma},{has_truth}",
        _fmt_row(inst.y),
    ]
    lines.extend(_fmt_row(row) for row in inst.design)
    if inst.truth is not None:
        lines.append(_fmt_row(inst.truth.beta_star))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_instance(path) -> ProblemInstance:
    """Read an instance written by save_instance."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    head = lines[0].split(",")
    n, p, seed = int(head[0]), int(head[1]), int(head[2])
    noise = NoiseConfig(head[3], float(head[4]))
    has_truth = bool(int(head[5]))
    y = np.array([float(v) for v in lines[1].split(",")])
    design = np.array([[float(v) for v in lines[2 + i].split(",")] for i in range(n)])
    truth = None
    if has_truth:
        beta = np.array([float(v) for v in lines[2 + n].split(",")])
        support = np.flatnonzero(beta)
        truth = GroundTruth(beta, support, float(np.linalg.norm(beta)))
    return ProblemInstance(design, y, noise, truth, seed=seed)
