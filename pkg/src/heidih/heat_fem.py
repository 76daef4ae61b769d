"""Fully discrete volatility solver on (0, D): piecewise-linear finite
elements with homogeneous Dirichlet conditions and backward Euler in time.

One step solves (M + k K) y' = M y + b where M is the interior mass matrix
with rows (h/6)[1, 4, 1], K the stiffness matrix with rows (a/h)[-1, 2, -1],
and b the load of the nodally interpolated noise increment. The system is
symmetric positive definite and is prefactorized for the bound time step.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .noise import NoiseGrid


@dataclass(frozen=True)
class YPath:
    """Nodal values of the discrete volatility, times i k on nodes j h.

    Boundary columns are identically zero (Dirichlet).
    """

    values: np.ndarray  # (N_k + 1, N_h + 1)
    k: float
    h: float
    D: float

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_intervals(self) -> int:
        return self.values.shape[1] - 1

    def eval_pointwise(self, i: int, x) -> float | np.ndarray:
        return eval_pointwise(self, i, x)


class FemSystem:
    """Assembled interior matrices and the factorization of M + k K."""

    def __init__(self, grid: NoiseGrid, a: float, k: float):
        if not a > 0:
            raise ValueError(f"diffusivity must be positive, got {a}")
        if not k > 0:
            raise ValueError(f"time step must be positive, got {k}")
        if grid.N < 2:
            raise ValueError("need at least one interior node (N >= 2)")
        self.grid = grid
        self.a = a
        self.k = k
        h = grid.h
        n = grid.N - 1  # interior nodes
        self.mass_diag = 4.0 * h / 6.0
        self.mass_off = h / 6.0
        self.stiff_diag = 2.0 * a / h
        self.stiff_off = -a / h
        ab = np.zeros((2, n))
        ab[1, :] = self.mass_diag + k * self.stiff_diag
        ab[0, 1:] = self.mass_off + k * self.stiff_off
        self._factor = cholesky_banded(ab)

    def mass_apply(self, y: np.ndarray) -> np.ndarray:
        """Interior mass matrix times an interior vector (zero boundary)."""
        out = self.mass_diag * y
        out[:-1] += self.mass_off * y[1:]
        out[1:] += self.mass_off * y[:-1]
        return out

    def system_apply(self, y: np.ndarray) -> np.ndarray:
        """(M + k K) times an interior vector; used for residual checks."""
        d = self.mass_diag + self.k * self.stiff_diag
        o = self.mass_off + self.k * self.stiff_off
        out = d * y
        out[:-1] += o * y[1:]
        out[1:] += o * y[:-1]
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve_banded((self._factor, False), rhs)


def assemble(grid: NoiseGrid, a: float, k: float) -> FemSystem:
    """Assemble mass/stiffness and prefactorize M + k K for time step k."""
    return FemSystem(grid, a, k)


def load_vector(system: FemSystem, noise_nodal: np.ndarray) -> np.ndarray:
    """Load b_j = <I_h dW, phi_j> for interior hat functions phi_j.

    This is the full tridiagonal mass stencil (h/6)(w_{j-1} + 4 w_j + w_{j+1})
    applied to the complete nodal vector: boundary nodal noise contributes
    through the stencil even though the solution is pinned to zero there.
    """
    w = np.asarray(noise_nodal, dtype=float)
    if w.shape != (system.grid.N + 1,):
        raise ValueError(f"noise vector must have length {system.grid.N + 1}, got {w.shape}")
    h = system.grid.h
    return (h / 6.0) * (w[:-2] + 4.0 * w[1:-1] + w[2:])


def step(system: FemSystem, y: np.ndarray, load: np.ndarray) -> np.ndarray:
    """One backward Euler step: solve (M + k K) y' = M y + load."""
    if y.shape != load.shape or y.shape != (system.grid.N - 1,):
        raise ValueError("state and load must be interior vectors")
    return system.solve(system.mass_apply(y) + load)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def project_initial(system: FemSystem, y0) -> np.ndarray:
    """Interior coefficients of the L2 projection of the initial condition.

    Callables are integrated cellwise with 4-point Gauss-Legendre (well
    beyond the h^2 accuracy of the elements); nodal arrays are treated as
    piecewise-linear interpolants, whose products with hats are exact under
    the same rule.
    """
    grid = system.grid
    h = grid.h
    nodes = grid.nodes()
    if callable(y0):
        f = y0
    else:
        vals = np.asarray(y0, dtype=float)
        if vals.shape != nodes.shape:
            raise ValueError(f"nodal initial data must have length {grid.N + 1}")
        f = lambda x: np.interp(x, nodes, vals)
    # quadrature points per cell: x = x_i + h (t+1)/2
    t = (_GL_NODES + 1.0) / 2.0
    xq = nodes[:-1, None] + h * t[None, :]  # (N, 4)
    fq = np.asarray(f(xq), dtype=float)
    wq = _GL_WEIGHTS * (h / 2.0)
    # hat centered at node j is rising on cell j-1 and falling on cell j
    rising = t
    falling = 1.0 - t
    contrib_right = fq @ (wq * rising)  # <f, rising part> per cell
    contrib_left = fq @ (wq * falling)
    b = contrib_right[:-1] + contrib_left[1:]
    ab = np.zeros((2, grid.N - 1))
    ab[1, :] = system.mass_diag
    ab[0, 1:] = system.mass_off
    mass_factor = cholesky_banded(ab)
    return cho_solve_banded((mass_factor, False), b)


def solve_path(system: FemSystem, y0, noise_source, n_steps: int) -> YPath:
    """Run the backward Euler recursion for n_steps and collect nodal values.

    noise_source: None for the deterministic equation, an (n_steps, N+1)
    array of nodal increments, an object with .sample() yielding one nodal
    vector per call, or any iterable of nodal vectors.
    """
    grid = system.grid
    values = np.zeros((n_steps + 1, grid.N + 1))
    if y0 is not None:
        values[0, 1:-1] = project_initial(system, y0)
    if noise_source is None:
        draw = lambda i: None
    elif hasattr(noise_source, "sample"):
        draw = lambda i: noise_source.sample()
    elif isinstance(noise_source, np.ndarray):
        if noise_source.shape != (n_steps, grid.N + 1):
            raise ValueError(
                f"noise array must have shape {(n_steps, grid.N + 1)}, got {noise_source.shape}"
            )
        draw = lambda i: noise_source[i]
    else:
        it = iter(noise_source)
        draw = lambda i: next(it)
    y = values[0, 1:-1].copy()
    zero_load = np.zeros(grid.N - 1)
    for i in range(n_steps):
        w = draw(i)
        load = zero_load if w is None else load_vector(system, w)
        y = step(system, y, load)
        values[i + 1, 1:-1] = y
    return YPath(values=values, k=system.k, h=grid.h, D=grid.D)


def eval_pointwise(path: YPath, i: int, x) -> float | np.ndarray:
    """Piecewise-linear evaluation of the time-i state at locations x."""
    xs = np.asarray(x, dtype=float)
    eps = 1e-12 * max(path.D, 1.0)
    if np.any(xs < -eps) or np.any(xs > path.D + eps):
        raise ValueError(f"location outside [0, {path.D}]")
    row = path.values[i]
    pos = np.clip(xs / path.h, 0.0, path.n_intervals)
    idx = np.minimum(pos.astype(int), path.n_intervals - 1)
    frac = pos - idx
    out = row[idx] * (1.0 - frac) + row[idx + 1] * frac
    if out.ndim == 0:
        return float(out)
    return out
