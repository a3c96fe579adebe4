"""Experiment harness: phase-transition grids, sparsity sweeps, scaling fits.

Every trial draws its instance from a seed derived deterministically from
(base_seed, s, n, trial), so grids are bit-reproducible regardless of worker
count or execution order; records are sorted before any CSV is written.
Failed solves are recorded with worst-case error ||beta*||_2 instead of
aborting the grid (phase-transition plots must include the failure region).
"""

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import NoiseConfig, make_instance, trial_seed
from .solver import SolverConfig, error_metric, extract_estimate, solve

__all__ = [
    "LambdaRule",
    "GridConfig",
    "SweepConfig",
    "ExperimentRecord",
    "run_phase_grid",
    "run_sparsity_sweep",
    "fit_scaling",
    "order_stat_quantile",
    "write_records_csv",
    "write_summary_csv",
    "write_fit_csv",
    "load_config",
    "resolve_threads",
]

_FMT = "%.17g"
SUCCESS_RELATIVE_ERROR = 1e-2  # a trial "succeeds" when error <= 1e-2 * ||beta*||


@dataclass
class LambdaRule:
    """Regularization rule: fixed(value) or scaled(c * sigma_eff * sqrt(s log(ep/s) / n)).

    For Poisson noise sigma_eff is ||beta*||_2 (the noise variance proxy);
    for Gaussian it is sigma.  The scaled rule is undefined at sigma = 0, so
    noiseless experiments must use the fixed rule.
    """

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("fixed", "scaled"):
            raise ValueError(f"unknown lambda rule {self.kind!r}")
        if self.value <= 0:
            raise ValueError(f"lambda rule value must be positive, got {self.value}")

    def lam_for(self, s: int, n: int, p: int, noise: NoiseConfig, beta_norm: float) -> float:
        if self.kind == "fixed":
            return self.value
        if noise.model == "gaussian" and noise.sigma > 0:
            sigma_eff = noise.sigma
        elif noise.model == "poisson":
            sigma_eff = beta_norm
        else:
            raise ValueError(
                "scaled lambda rule needs gaussian noise with sigma > 0 or poisson noise; "
                "use the fixed rule for noiseless runs"
            )
        return self.value * sigma_eff * math.sqrt(s * math.log(math.e * p / s) / n)


@dataclass
class GridConfig:
    """Phase-transition grid over (s, n) cells."""

    p: int
    s_values: list
    n_values: list
    trials: int
    noise: NoiseConfig
    beta_norm: float
    lambda_rule: LambdaRule
    quantile: float = 0.8
    base_seed: int = 0
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0 < self.quantile < 1:
            raise ValueError(f"quantile must lie in (0, 1), got {self.quantile}")


@dataclass
class SweepConfig:
    """Error-vs-sparsity sweep at fixed (p, n)."""

    p: int
    n: int
    s_values: list
    trials: int
    noise: NoiseConfig
    beta_norm: float
    lambda_rule: LambdaRule
    quantile: float = 0.8
    base_seed: int = 0
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0 < self.quantile < 1:
            raise ValueError(f"quantile must lie in (0, 1), got {self.quantile}")
        if self.noise.model == "poisson" and self.beta_norm <= 0:
            raise ValueError("poisson sweeps need beta_norm > 0")


@dataclass
class ExperimentRecord:
    s: int
    n: int
    trial: int
    seed: int
    error: float
    iterations: int
    runtime_seconds: float
    converged: bool


def _run_trial(p, s, n, trial, noise, beta_norm, lam, solver_overrides, seed) -> ExperimentRecord:
    t0 = time.perf_counter()
    inst = make_instance(p=p, s=s, n=n, noise=noise, beta_norm=beta_norm, seed=seed)
    # config problems must surface as config errors, not as failed trials
    cfg = SolverConfig(lam=lam, s=s, **solver_overrides)
    try:
        F, diag = solve(inst, cfg)
        if F.rank == 0:
            beta_hat = np.zeros(p)
        else:
            beta_hat, _ = extract_estimate(F)
        err = error_metric(beta_hat, inst.truth.beta_star)
        iters = diag.outer_iters
        converged = diag.converged
    except Exception:
        # failure policy: worst-case error, grid continues
        err, iters, converged = beta_norm, 0, False
    return ExperimentRecord(
        s=int(s),
        n=int(n),
        trial=int(trial),
        seed=int(seed),
        error=float(err),
        iterations=int(iters),
        runtime_seconds=time.perf_counter() - t0,
        converged=bool(converged),
    )


def _run_cells(p, cells, trials, noise, beta_norm, lambda_rule, base_seed, solver_overrides, threads):
    """Run all (s, n) cells x trials; returns records sorted by (s, n, trial)."""

    def one(task):
        s, n, trial = task
        seed = trial_seed(base_seed, s, n, trial)
        lam = lambda_rule.lam_for(s, n, p, noise, beta_norm)
        return _run_trial(p, s, n, trial, noise, beta_norm, lam, solver_overrides, seed)

    tasks = [(s, n, t) for (s, n) in cells for t in range(trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(one, tasks))
    else:
        records = [one(t) for t in tasks]
    records.sort(key=lambda r: (r.s, r.n, r.trial))
    return records


def order_stat_quantile(values, q: float) -> float:
    """Order statistic at index ceil(q * T) - 1 of the sorted values."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("quantile of empty data")
    idx = math.ceil(q * v.size) - 1
    return float(v[max(0, min(idx, v.size - 1))])


def _summarize(records, quantile, beta_norm):
    cells = sorted({(r.s, r.n) for r in records})
    rows = []
    for (s, n) in cells:
        errs = [r.error for r in records if r.s == s and r.n == n]
        rows.append(
            {
                "s": s,
                "n": n,
                "quantile_error": order_stat_quantile(errs, quantile),
                "success_rate": float(
                    np.mean([e <= SUCCESS_RELATIVE_ERROR * beta_norm for e in errs])
                ),
            }
        )
    return rows


def run_phase_grid(cfg: GridConfig, threads: int = 1):
    """Run the full (s, n, trial) grid; returns (records, summary rows)."""
    cells = [(s, n) for s in cfg.s_values for n in cfg.n_values]
    records = _run_cells(
        cfg.p, cells, cfg.trials, cfg.noise, cfg.beta_norm,
        cfg.lambda_rule, cfg.base_seed, cfg.solver, threads,
    )
    return records, _summarize(records, cfg.quantile, cfg.beta_norm)


def run_sparsity_sweep(cfg: SweepConfig, threads: int = 1):
    """Sweep s at fixed (p, n); returns (records, summary rows, (c, mad))."""
    cells = [(s, cfg.n) for s in cfg.s_values]
    records = _run_cells(
        cfg.p, cells, cfg.trials, cfg.noise, cfg.beta_norm,
        cfg.lambda_rule, cfg.base_seed, cfg.solver, threads,
    )
    summary = _summarize(records, cfg.quantile, cfg.beta_norm)
    errs = [row["quantile_error"] for row in summary]
    svals = [row["s"] for row in summary]
    c, mad = fit_scaling(errs, svals, cfg.p)
    return records, summary, (c, mad)


def fit_scaling(errors, s_values, p):
    """Min mean-absolute-deviation fit of c * sqrt(s log(ep/s)) to the errors.

    The 1-D problem min_c sum_s |e_s - c f_s| is solved exactly as the
    weighted median of the ratios e_s / f_s with weights f_s.  Returns
    (c, mean absolute deviation).
    """
    e = np.asarray(errors, dtype=float)
    sv = np.asarray(s_values, dtype=float)
    if e.size == 0:
        raise ValueError("fit_scaling needs at least one data point")
    if e.shape != sv.shape:
        raise ValueError(f"shape mismatch: {e.shape} errors vs {sv.shape} s values")
    f = np.sqrt(sv * np.log(np.e * p / sv))
    ratios = e / f
    order = np.argsort(ratios, kind="stable")
    w = f[order]
    cum = np.cumsum(w)
    idx = int(np.searchsorted(cum, 0.5 * cum[-1]))
    c = float(ratios[order][min(idx, e.size - 1)])
    mad = float(np.abs(e - c * f).mean())
    return c, mad


# ---------------------------------------------------------------------------
# CSV / config plumbing
# ---------------------------------------------------------------------------


def write_records_csv(path, records) -> None:
    lines = ["s,n,trial,seed,error,iterations,runtime_seconds,converged"]
    for r in records:
        lines.append(
            f"{r.s},{r.n},{r.trial},{r.seed},{_FMT % r.error},{r.iterations},"
            f"{_FMT % r.runtime_seconds},{'true' if r.converged else 'false'}"
        )
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_summary_csv(path, summary_rows) -> None:
    lines = ["s,n,quantile_error,success_rate"]
    for row in summary_rows:
        lines.append(
            f"{row['s']},{row['n']},{_FMT % row['quantile_error']},{_FMT % row['success_rate']}"
        )
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_fit_csv(path, c: float, mad: float) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("c,mad\n" + f"{_FMT % c},{_FMT % mad}\n")


def _noise_from_dict(d) -> NoiseConfig:
    return NoiseConfig(model=d.get("model", "none"), sigma=float(d.get("sigma", 0.0)))


def _rule_from_dict(d) -> LambdaRule:
    return LambdaRule(kind=d["kind"], value=float(d["value"]))


def load_config(path, kind: str):
    """Load a grid or sweep config from JSON (keys match the dataclass fields)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    common = dict(
        p=int(raw["p"]),
        s_values=[int(v) for v in raw["s_values"]],
        trials=int(raw["trials"]),
        noise=_noise_from_dict(raw.get("noise", {})),
        beta_norm=float(raw.get("beta_norm", 1.0)),
        lambda_rule=_rule_from_dict(raw["lambda_rule"]),
        quantile=float(raw.get("quantile", 0.8)),
        base_seed=int(raw.get("base_seed", 0)),
        solver=dict(raw.get("solver", {})),
    )
    if kind == "grid":
        return GridConfig(n_values=[int(v) for v in raw["n_values"]], **common)
    if kind == "sweep":
        return SweepConfig(n=int(raw["n"]), **common)
    raise ValueError(f"unknown config kind {kind!r}")


def resolve_threads(cli_value=None) -> int:
    """SPARSELIFT_THREADS overrides the CLI flag; default 1."""
    env = os.environ.get("SPARSELIFT_THREADS")
    if env:
        return max(1, int(env))
    if cli_value:
        return max(1, int(cli_value))
    return 1
