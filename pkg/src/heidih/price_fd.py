"""Fully discrete forward-price process on an equal-step space-time lattice.

With lattice points (t_i, x_j) = (i k, j k) the scheme advances along
characteristics,

    X[i+1][j] = X[i][j+1] + scale * Y(t_i, x_j) * dbeta_i,

so the drift part (the left shift of the initial curve) is solved exactly;
the equivalent closed form sums volatility values along the characteristic
through (t_n, x_j). The volatility field Y is a finite element path,
evaluated between nodes by linear interpolation, sized on a domain
D >= 2T - k so every lattice characteristic stays inside it.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .heat_fem import YPath


class DomainTooSmallError(ValueError):
    """Volatility domain does not cover the lattice characteristics."""


@dataclass(frozen=True)
class InitialCurve:
    """Initial forward curve f(x) = smooth_part(x) + level."""

    smooth_part: Optional[Callable] = None
    level: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.smooth_part is None:
            out = np.full(x.shape, float(self.level))
        else:
            out = np.asarray(self.smooth_part(x), dtype=float) + self.level
        if out.ndim == 0:
            return float(out)
        return out


@dataclass(frozen=True)
class PriceGrid:
    """Equal step k in time and space up to horizon T; N_k = T / k."""

    T: float
    k: float

    def __post_init__(self):
        if not (self.T > 0 and self.k > 0):
            raise ValueError(f"need T > 0 and k > 0, got T={self.T}, k={self.k}")
        steps = self.T / self.k
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"T/k = {steps} is not an integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.k))


@dataclass(frozen=True)
class XPath:
    """Price values on the lattice, X[i][j] at (i k, j k)."""

    values: np.ndarray  # (N_k + 1, N_k + 1)
    T: float
    k: float
    scaling: float

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1


def shift_eval(curve: InitialCurve, t: float, x) -> float | np.ndarray:
    """Exact drift along characteristics: smooth_part(x + t) + level."""
    return curve(np.asarray(x, dtype=float) + t)


def beta_increments(rng: np.random.Generator, n_steps: int, k: float) -> np.ndarray:
    """iid N(0, k) increments of the scalar price driver; drawn from its own
    seed lane, independent of the volatility noise."""
    return math.sqrt(k) * rng.standard_normal(n_steps)


def _time_ratio(grid: PriceGrid, ypath: YPath) -> int:
    ratio = grid.k / ypath.k
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1 - 1e-9:
        raise ValueError(
            f"lattice step {grid.k} must be an integer multiple of the volatility step {ypath.k}"
        )
    return int(round(ratio))


def _check_domain(grid: PriceGrid, ypath: YPath) -> None:
    need = 2.0 * grid.T - grid.k
    if ypath.D < need - 1e-9 * max(need, 1.0):
        raise DomainTooSmallError(
            f"volatility domain D={ypath.D} smaller than 2T - k = {need}"
        )


def solve_x_strided(
    grid: PriceGrid, curve: InitialCurve, scaling: float, ypath: YPath, beta: np.ndarray, stride: int = 1
) -> np.ndarray:
    """Lattice recursion keeping every stride-th row and column only.

    The working row extends to x_{2 N_k} so the shift never needs values
    from outside; the extension is filled from the initial curve, which the
    scheme transports exactly. stride > 1 bounds memory when a fine
    reference is compared on a coarser shared lattice.
    """
    _check_domain(grid, ypath)
    ratio = _time_ratio(grid, ypath)
    n = grid.n_steps
    if beta.shape != (n,):
        raise ValueError(f"need {n} driver increments, got {beta.shape}")
    if stride < 1 or n % stride != 0:
        raise ValueError(f"stride {stride} must divide the step count {n}")
    k = grid.k
    xs = np.arange(2 * n + 1) * k
    row = np.asarray(curve(xs), dtype=float)
    n_keep = n // stride
    out = np.empty((n_keep + 1, n_keep + 1))
    out[0] = row[: n + 1 : stride]
    for i in range(n):
        m = 2 * n - i  # row currently holds indices 0..m
        y_vals = ypath.eval_pointwise(i * ratio, xs[:m])
        row = row[1 : m + 1] + (scaling * beta[i]) * y_vals
        if (i + 1) % stride == 0:
            out[(i + 1) // stride] = row[: n + 1 : stride]
    return out


def solve_x(grid: PriceGrid, curve: InitialCurve, scaling: float, ypath: YPath, beta: np.ndarray) -> XPath:
    """Run the lattice recursion; returns the full (N_k+1)^2 value array."""
    values = solve_x_strided(grid, curve, scaling, ypath, beta, stride=1)
    return XPath(values=values, T=grid.T, k=grid.k, scaling=scaling)


def closed_form_x(grid: PriceGrid, curve: InitialCurve, scaling: float, ypath: YPath, beta: np.ndarray) -> XPath:
    """Direct evaluation of the closed form

        X[n][j] = drift(t_n, x_j)
                  + scale * sum_{i<n} Y(t_i, x_j + t_n - t_{i+1}) dbeta_i,

    an independent oracle for solve_x (O(N^3) work).
    """
    _check_domain(grid, ypath)
    ratio = _time_ratio(grid, ypath)
    n = grid.n_steps
    if beta.shape != (n,):
        raise ValueError(f"need {n} driver increments, got {beta.shape}")
    k = grid.k
    xs = np.arange(n + 1) * k
    out = np.empty((n + 1, n + 1))
    for m in range(n + 1):
        acc = np.asarray(curve(xs + m * k), dtype=float)
        for i in range(m):
            args = xs + (m - i - 1) * k
            acc = acc + (scaling * beta[i]) * ypath.eval_pointwise(i * ratio, args)
        out[m] = acc
    return XPath(values=out, T=grid.T, k=k, scaling=scaling)


def error_decomposition_rhs(
    ypaths_fine,
    ypaths_coarse,
    grid: PriceGrid,
    scaling: float,
    n: int,
    j: int,
):
    """Right-hand side of the pointwise error identity at lattice point
    (t_n, x_j): the expected integrated squared volatility mismatch

        scale^2 sum_{i<n} int_{t_i}^{t_{i+1}}
            E|Y(r, t_n + x_j - r) - Yc(t_i, t_n + x_j - t_{i+1})|^2 dr.

    The fine path stands in for the exact field and the time integral is
    discretized on its grid, sampling the fine field at its own scheme
    points (tau_m, t_n + x_j - tau_{m+1}). With that convention the sum is
    the exact discrete counterpart of the identity (Ito isometry of the two
    schemes under shared driver noise) and vanishes when both paths
    coincide. The expectation averages the matched sample pairs; returns
    (estimate, standard error).
    """
    pairs = list(zip(ypaths_fine, ypaths_coarse))
    if not pairs:
        raise ValueError("need at least one matched sample pair")
    per_sample = np.empty(len(pairs))
    for s, (yf, yc) in enumerate(pairs):
        ratio = grid.k / yf.k
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("fine volatility step must divide the lattice step")
        ratio = int(round(ratio))
        coarse_ratio = _time_ratio(grid, yc)
        kf = yf.k
        target = n * grid.k + j * grid.k  # t_n + x_j
        total = 0.0
        for i in range(n):
            xc = target - (i + 1) * grid.k
            yc_val = yc.eval_pointwise(i * coarse_ratio, xc)
            cell = 0.0
            for m in range(i * ratio, (i + 1) * ratio):
                xf = target - (m + 1) * kf
                yf_val = yf.eval_pointwise(m, xf)
                cell += kf * (yf_val - yc_val) ** 2
            total += cell
        per_sample[s] = scaling**2 * total
    estimate = float(per_sample.mean())
    stderr = float(per_sample.std(ddof=1) / math.sqrt(len(pairs))) if len(pairs) > 1 else 0.0
    return estimate, stderr
