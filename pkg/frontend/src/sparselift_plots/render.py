"""CSV-to-image rendering for the benchmark outputs.

Reads only the documented schemas (summary.csv: s,n,quantile_error,success_rate;
fit.csv: c,mad) and never recomputes errors or fits, so the bench component
stays the single source of truth.  Output is deterministic given the inputs:
fixed figure geometry, pinned style, and stripped PNG metadata.
"""

import math
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LogNorm  # noqa: E402

SUMMARY_COLUMNS = ["s", "n", "quantile_error", "success_rate"]
FIT_COLUMNS = ["c", "mad"]

_STYLE = {
    "figsize": (6.0, 4.5),
    "dpi": 120,
}


class SchemaError(ValueError):
    """Input CSV does not match the documented bench schema."""


@dataclass
class FigureSpec:
    input_csv: str
    kind: str  # "heatmap" | "sweep"
    output: str
    color_scale: str = "linear"  # "linear" | "log"

    def __post_init__(self):
        if self.kind not in ("heatmap", "sweep"):
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if self.color_scale not in ("linear", "log"):
            raise ValueError(f"unknown color scale {self.color_scale!r}")


def _read_csv(path, expected_columns):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty file, expected columns {expected_columns}")
    header = lines[0].split(",")
    if header != expected_columns:
        raise SchemaError(
            f"{path}: expected columns {expected_columns}, found {header}"
        )
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(expected_columns):
            raise SchemaError(f"{path}: row has {len(parts)} fields, expected {len(expected_columns)}")
        rows.append([float(v) for v in parts])
    return rows


def read_summary(path):
    """Rows of (s, n, quantile_error, success_rate) from a bench summary.csv."""
    return _read_csv(path, SUMMARY_COLUMNS)


def read_fit(path):
    """(c, mad) from a bench fit.csv."""
    rows = _read_csv(path, FIT_COLUMNS)
    if len(rows) != 1:
        raise SchemaError(f"{path}: expected exactly one fit row, found {len(rows)}")
    return rows[0][0], rows[0][1]


def _save(fig, path):
    # empty metadata drops the matplotlib Software stamp for byte-stable output
    fig.savefig(path, dpi=_STYLE["dpi"], metadata={"Software": None})
    plt.close(fig)


def plot_heatmap(spec: FigureSpec) -> str:
    """Render the (s, n) quantile-error grid; darker cells mean higher error."""
    rows = read_summary(spec.input_csv)
    s_vals = sorted({int(r[0]) for r in rows})
    n_vals = sorted({int(r[1]) for r in rows})
    grid = np.full((len(s_vals), len(n_vals)), np.nan)
    for s, n, err, _rate in rows:
        grid[s_vals.index(int(s)), n_vals.index(int(n))] = err
    fig, ax = plt.subplots(figsize=_STYLE["figsize"])
    norm = None
    if spec.color_scale == "log":
        positive = grid[np.isfinite(grid) & (grid > 0)]
        vmin = positive.min() if positive.size else 1e-12
        norm = LogNorm(vmin=vmin, vmax=max(np.nanmax(grid), vmin * 10))
    im = ax.imshow(
        grid,
        cmap="Greys",  # larger error -> darker
        norm=norm,
        origin="lower",
        aspect="auto",
        interpolation="nearest",
    )
    ax.set_xticks(range(len(n_vals)), [str(n) for n in n_vals])
    ax.set_yticks(range(len(s_vals)), [str(s) for s in s_vals])
    ax.set_xlabel("number of measurements n")
    ax.set_ylabel("sparsity s")
    ax.set_title("recovery error by (s, n)")
    fig.colorbar(im, ax=ax, label="quantile error")
    fig.tight_layout()
    _save(fig, spec.output)
    return spec.output


def plot_sweep(spec: FigureSpec, fit_path=None, p=None) -> str:
    """Scatter per-s errors; overlay c * sqrt(s log(ep/s)) when fit and p are known."""
    rows = read_summary(spec.input_csv)
    s_vals = np.array([r[0] for r in rows])
    errs = np.array([r[2] for r in rows])
    order = np.argsort(s_vals)
    s_vals, errs = s_vals[order], errs[order]
    fig, ax = plt.subplots(figsize=_STYLE["figsize"])
    ax.plot(s_vals, errs, "o", color="tab:blue", label="measured quantile error")
    curve_drawn = False
    if fit_path is not None:
        c, _mad = read_fit(fit_path)
        if p is None:
            print("warning: no ambient dimension given (--p); skipping the fitted curve")
        else:
            s_dense = np.linspace(s_vals.min(), s_vals.max(), 256)
            ax.plot(
                s_dense,
                c * np.sqrt(s_dense * np.log(math.e * p / s_dense)),
                "-",
                color="tab:red",
                label="fitted scaling curve",
            )
            curve_drawn = True
    else:
        print("warning: fit.csv not found; plotting the scatter only")
    if spec.color_scale == "log":
        ax.set_yscale("log")
    ax.set_xlabel("sparsity s")
    ax.set_ylabel("quantile error")
    ax.set_title("error vs sparsity" + (" with scaling fit" if curve_drawn else ""))
    ax.legend()
    fig.tight_layout()
    _save(fig, spec.output)
    return spec.output
