"""Figure builders for the study CSV outputs.

errors.csv (study,param,resolution,error,stderr,wall_s) becomes a log2-log2
convergence plot with dashed reference-slope guides and, when rates.csv is
given, fitted slopes in the legend. timing.csv becomes a log-log cost plot.
Surface CSVs (t,x,value) become a heatmap. Rendering is deterministic:
fixed style, no timestamps, stable SVG ids.
"""

import csv
import warnings
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg", force=False)
matplotlib.rcParams["svg.hashsalt"] = "heidih-plots"

import matplotlib.pyplot as plt
import numpy as np

FIGURE_KINDS = ("loglog-rates", "surface", "timing")


class MissingColumnError(ValueError):
    """Input CSV lacks a required column."""


@dataclass(frozen=True)
class PlotJob:
    inputs: tuple
    kind: str
    output: str
    reference_slopes: tuple = (0.5, 1.0)

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise ValueError(f"kind must be one of {FIGURE_KINDS}, got {self.kind!r}")
        if not self.inputs:
            raise ValueError("need at least one input CSV")


def _read_columns(path, required):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise MissingColumnError(f"{path}: missing column(s) {missing}, found {header}")
        rows = list(reader)
    return rows


def _save(fig, output):
    if str(output).endswith(".svg"):
        fig.savefig(output, metadata={"Date": None})
    else:
        fig.savefig(output, dpi=150)
    plt.close(fig)


def _guide_lines(ax, slopes, xs, ys):
    x0, x1 = min(xs), max(xs)
    anchor_y = min(ys)
    for s in slopes:
        ref = anchor_y * (np.array([x0, x1]) / x0) ** s
        ax.plot([x0, x1], ref, linestyle="--", color="0.6", linewidth=1.0, label=f"slope {s:g}")


def plot_loglog(job: PlotJob):
    """Convergence figure: one line per parameter, log2 axes, dashed
    reference-slope guides, fitted slopes in the legend when a rates.csv is
    supplied as second input. Returns the figure."""
    rows = _read_columns(job.inputs[0], ["param", "resolution", "error"])
    fitted = {}
    if len(job.inputs) > 1:
        for r in _read_columns(job.inputs[1], ["param", "slope"]):
            fitted[r["param"]] = float(r["slope"])
    groups = {}
    for r in rows:
        groups.setdefault(r["param"], []).append((float(r["resolution"]), float(r["error"])))
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    all_xs, all_ys = [], []
    for param, pts in groups.items():
        pts = sorted((x, y) for x, y in pts if y > 0)
        if not pts:
            warnings.warn(f"parameter group {param!r} has no positive errors; skipped", stacklevel=2)
            continue
        xs, ys = zip(*pts)
        label = param if param not in fitted else f"{param} (fit {fitted[param]:.2f})"
        ax.plot(xs, ys, marker="o", label=label)
        all_xs += xs
        all_ys += ys
    if not all_xs:
        raise ValueError("nothing to plot: every parameter group was empty")
    _guide_lines(ax, job.reference_slopes, all_xs, all_ys)
    ax.set_xscale("log", base=2)
    ax.set_yscale("log", base=2)
    ax.set_xlabel("step size")
    ax.set_ylabel("max pointwise RMS error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return fig


def plot_timing(job: PlotJob):
    """Cost figure: wall seconds per sample against the step size."""
    rows = _read_columns(job.inputs[0], ["param", "resolution", "wall_s"])
    groups = {}
    for r in rows:
        groups.setdefault(r["param"], []).append((float(r["resolution"]), float(r["wall_s"])))
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for param, pts in sorted(groups.items()):
        xs, ys = zip(*sorted(pts))
        ax.plot(xs, ys, marker="s", label=param)
    ax.set_xscale("log", base=2)
    ax.set_yscale("log", base=10)
    ax.set_xlabel("lattice step k")
    ax.set_ylabel("seconds per sample")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return fig


def plot_surface(job: PlotJob):
    """Heatmap of a (t, x, value) lattice CSV; NaN cells are rejected."""
    rows = _read_columns(job.inputs[0], ["t", "x", "value"])
    ts = np.array([float(r["t"]) for r in rows])
    xs = np.array([float(r["x"]) for r in rows])
    vals = np.array([float(r["value"]) for r in rows])
    if np.any(~np.isfinite(vals)):
        raise ValueError("surface contains non-finite cells")
    t_axis = np.unique(ts)
    x_axis = np.unique(xs)
    if t_axis.size * x_axis.size != len(rows):
        raise ValueError("surface rows do not form a complete lattice")
    grid = np.full((t_axis.size, x_axis.size), np.nan)
    t_idx = np.searchsorted(t_axis, ts)
    x_idx = np.searchsorted(x_axis, xs)
    grid[t_idx, x_idx] = vals
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    mesh = ax.pcolormesh(x_axis, t_axis, grid, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="value")
    ax.set_xlabel("time to maturity x")
    ax.set_ylabel("time t")
    fig.tight_layout()
    return fig


def render(job: PlotJob) -> str:
    """Build the figure for the job and write it to job.output."""
    if job.kind == "loglog-rates":
        fig = plot_loglog(job)
    elif job.kind == "timing":
        fig = plot_timing(job)
    else:
        fig = plot_surface(job)
    _save(fig, job.output)
    return job.output
