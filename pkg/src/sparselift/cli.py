"""Command-line interface: solve, phase-grid, sweep, spca.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import bench
from .model import NoiseConfig, load_instance, make_instance
from .solver import (
    CertificateInconsistency,
    NumericalFailure,
    SolverConfig,
    error_metric,
    extract_estimate,
    solve,
    write_diagnostics,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparselift",
        description="Sparse phase retrieval via a lifted factored program with a mixed sparsity/low-rank regularizer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="output directory for CSV artifacts")
        sp.add_argument("--seed", type=int, help="base seed override")
        sp.add_argument("--threads", type=int, help="worker threads (SPARSELIFT_THREADS overrides)")

    sp = sub.add_parser("solve", help="solve one synthetic (or saved) instance")
    common(sp)
    sp.add_argument("--p", type=int, help="ambient dimension")
    sp.add_argument("--s", type=int, help="sparsity level")
    sp.add_argument("--n", type=int, help="number of measurements")
    sp.add_argument("--noise", choices=["none", "gaussian", "poisson"])
    sp.add_argument("--sigma", type=float, help="gaussian noise std")
    sp.add_argument("--beta-norm", type=float, dest="beta_norm")
    sp.add_argument("--lam", type=float, help="regularization weight")
    sp.add_argument("--instance", help="load instance from CSV instead of sampling")

    sp = sub.add_parser("phase-grid", help="run a phase-transition grid")
    common(sp)

    sp = sub.add_parser("sweep", help="run an error-vs-sparsity sweep")
    common(sp)

    sp = sub.add_parser("spca", help="run the spiked-model sparse-PCA experiment")
    common(sp)
    return parser


def _load_json(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _ensure_out(out):
    if out:
        os.makedirs(out, exist_ok=True)
    return out


def _pick(cli_value, raw, key, default):
    if cli_value is not None:
        return cli_value
    return raw.get(key, default)


def _cmd_solve(args) -> int:
    raw = _load_json(args.config) if args.config else {}
    if args.instance or raw.get("instance"):
        inst = load_instance(args.instance or raw["instance"])
    else:
        p = _pick(args.p, raw, "p", None)
        s = _pick(args.s, raw, "s", None)
        n = _pick(args.n, raw, "n", None)
        if not (p and s and n):
            print("solve needs --p/--s/--n (or a config providing them)", file=sys.stderr)
            return EXIT_CONFIG
        noise_raw = raw.get("noise", {})
        noise = NoiseConfig(
            model=_pick(args.noise, noise_raw, "model", "none"),
            sigma=float(_pick(args.sigma, noise_raw, "sigma", 0.0)),
        )
        seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
        inst = make_instance(
            p=int(p), s=int(s), n=int(n), noise=noise,
            beta_norm=float(_pick(args.beta_norm, raw, "beta_norm", 1.0)), seed=seed,
        )
    lam = args.lam if args.lam is not None else raw.get("lam")
    if lam is None:
        lam = 1e-3 * float(np.abs(inst.y).max() or 1.0)
    s_reg = args.s or raw.get("s") or (len(inst.truth.support) if inst.truth else None)
    if s_reg is None:
        print("solve needs a sparsity parameter --s", file=sys.stderr)
        return EXIT_CONFIG
    cfg = SolverConfig(lam=float(lam), s=float(s_reg), **raw.get("solver", {}))
    F, diag = solve(inst, cfg)
    if F.rank:
        beta_hat, _ = extract_estimate(F)
    else:
        beta_hat = np.zeros(inst.p)
    err = error_metric(beta_hat, inst.truth.beta_star) if inst.truth else float("nan")
    out = _ensure_out(args.out)
    if out:
        write_diagnostics(os.path.join(out, "diagnostics.csv"), diag)
    final_obj = diag.history[-1].objective if diag.history else 0.0
    print(
        f"solve: p={inst.p} n={inst.n} lam={cfg.lam:.6g} converged={str(diag.converged).lower()} "
        f"rank={F.rank} objective={final_obj:.6g} error={err:.6g} seconds={diag.runtime_seconds:.2f}"
    )
    return EXIT_OK


def _cmd_phase_grid(args) -> int:
    if not args.config:
        print("phase-grid requires --config", file=sys.stderr)
        return EXIT_CONFIG
    cfg = bench.load_config(args.config, "grid")
    if args.seed is not None:
        cfg.base_seed = args.seed
    threads = bench.resolve_threads(args.threads)
    records, summary = bench.run_phase_grid(cfg, threads=threads)
    out = _ensure_out(args.out or ".")
    bench.write_records_csv(os.path.join(out, "records.csv"), records)
    bench.write_summary_csv(os.path.join(out, "summary.csv"), summary)
    n_success = sum(r.converged for r in records)
    print(
        f"phase-grid: {len(records)} trials over {len(summary)} cells, "
        f"{n_success} converged, wrote {out}/records.csv and {out}/summary.csv"
    )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    if not args.config:
        print("sweep requires --config", file=sys.stderr)
        return EXIT_CONFIG
    cfg = bench.load_config(args.config, "sweep")
    if args.seed is not None:
        cfg.base_seed = args.seed
    threads = bench.resolve_threads(args.threads)
    records, summary, (c, mad) = bench.run_sparsity_sweep(cfg, threads=threads)
    out = _ensure_out(args.out or ".")
    bench.write_records_csv(os.path.join(out, "records.csv"), records)
    bench.write_summary_csv(os.path.join(out, "summary.csv"), summary)
    bench.write_fit_csv(os.path.join(out, "fit.csv"), c, mad)
    print(
        f"sweep: {len(records)} trials over {len(summary)} sparsity levels, "
        f"fit c={c:.6g} mad={mad:.6g}, wrote records/summary/fit CSVs to {out}"
    )
    return EXIT_OK


def _cmd_spca(args) -> int:
    from .spca import (
        SpikedModel,
        empirical_covariance,
        sample_spiked,
        spca_solve,
        write_spca_diagnostics,
    )

    raw = _load_json(args.config) if args.config else {}
    p = int(raw.get("p", 200))
    s = int(raw.get("s", 5))
    n = int(raw.get("n", 100))
    sigma1 = float(raw.get("sigma1", 2.0))
    sigma2 = float(raw.get("sigma2", 1.0))
    trials = int(raw.get("trials", 20))
    lam = float(raw.get("lam", 0.1))
    base_seed = args.seed if args.seed is not None else int(raw.get("base_seed", 0))

    align_f, align_pca = [], []
    out = _ensure_out(args.out)
    rng = np.random.default_rng(base_seed)
    for trial in range(trials):
        support = np.sort(rng.choice(p, size=s, replace=False))
        v1 = np.zeros(p)
        vals = rng.standard_normal(s)
        v1[support] = vals / np.linalg.norm(vals)
        model = SpikedModel(p=p, s=s, n=n, sigma1=sigma1, sigma2=sigma2, v1=v1)
        X = sample_spiked(model, seed=int(rng.integers(2**63)))
        cov = empirical_covariance(X)
        F, diag = spca_solve(cov.sigma_hat, lam, s)
        if F.rank:
            beta_hat, _ = extract_estimate(F)
            u = beta_hat / (np.linalg.norm(beta_hat) or 1.0)
            align_f.append(abs(float(u @ v1)))
        else:
            align_f.append(0.0)
        w, V = np.linalg.eigh(cov.sigma_hat)
        align_pca.append(abs(float(V[:, -1] @ v1)))
        if out and trial == 0:
            write_spca_diagnostics(os.path.join(out, "spca_diagnostics.csv"), diag)
    print(
        f"spca [EXPERIMENTAL]: trials={trials} median alignment factored={np.median(align_f):.4f} "
        f"vanilla-pca={np.median(align_pca):.4f}"
    )
    return EXIT_OK


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles --help (0) and usage errors (2)
        return int(exc.code or 0)
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "phase-grid":
            return _cmd_phase_grid(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "spca":
            return _cmd_spca(args)
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, CertificateInconsistency, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
