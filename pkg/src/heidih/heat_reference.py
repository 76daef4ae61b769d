"""Reference evaluators for the heat semigroups used to validate the FEM
solver and to size the localized domain.

The interval semigroup is evaluated through its sine eigenexpansion with
eigenvalues a pi^2 j^2 / D^2; the half-line semigroup through the heat
kernel and its boundary image (reflection method, minus sign for Dirichlet
and plus for Neumann). The localization error of truncating the half-line
to (0, D) decays like exp(-(D-x)^2 / (8 a T)), which drives domain choice.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np


class TruncationError(RuntimeError):
    """Requested spectral truncation cannot reach the tolerance."""


@dataclass(frozen=True)
class SpectralTruncation:
    """Number of sine modes J and the tail bound exp(-lambda_J t_min)||v||."""

    J: int
    tail_bound: float


def eigenvalue(D: float, a: float, j: int) -> float:
    """lambda_{D,j} = a pi^2 j^2 / D^2."""
    return a * math.pi**2 * j**2 / D**2


def choose_truncation(D: float, a: float, t_min: float, v_norm: float, tol: float = 1e-12) -> SpectralTruncation:
    """Smallest J with exp(-lambda_J t_min) v_norm <= tol."""
    if not t_min > 0:
        raise TruncationError("spectral truncation needs t > 0")
    if v_norm <= tol:
        return SpectralTruncation(J=1, tail_bound=v_norm)
    j = math.sqrt(math.log(v_norm / tol) / (a * t_min)) * D / math.pi
    J = max(1, int(math.ceil(j)))
    return SpectralTruncation(J=J, tail_bound=math.exp(-eigenvalue(D, a, J) * t_min) * v_norm)


_GL8_NODES, _GL8_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _composite_gl(lo: float, hi: float, cells: int):
    edges = np.linspace(lo, hi, cells + 1)
    half = (edges[1] - edges[0]) / 2.0
    mids = (edges[:-1] + edges[1:]) / 2.0
    pts = (mids[:, None] + half * _GL8_NODES[None, :]).ravel()
    wts = np.tile(half * _GL8_WEIGHTS, cells)
    return pts, wts


def spectral_semigroup(v, t: float, x, D: float, a: float, J: int | None = None, tol: float = 1e-12) -> float | np.ndarray:
    """Interval Dirichlet semigroup applied to v, evaluated at (t, x).

    Coefficients <v, e_j> use composite 8-point Gauss-Legendre with at
    least two cells per mode wavelength. If J is omitted it is chosen so
    the truncation tail exp(-lambda_J t) ||v|| stays below tol; if J is
    given and the tail exceeds tol a TruncationError is raised.
    """
    if not t > 0:
        raise TruncationError("spectral evaluation needs t > 0")
    probe_pts, probe_wts = _composite_gl(0.0, D, 64)
    v_norm = math.sqrt(float(probe_wts @ np.asarray(v(probe_pts), dtype=float) ** 2))
    if J is None:
        J = choose_truncation(D, a, t, v_norm, tol).J
    else:
        tail = math.exp(-eigenvalue(D, a, J) * t) * v_norm
        if tail > tol:
            raise TruncationError(
                f"tail bound {tail:.3e} above tolerance {tol:.1e} for J={J}, t={t}"
            )
    cells = max(32, 2 * J)
    pts, wts = _composite_gl(0.0, D, cells)
    vq = np.asarray(v(pts), dtype=float)
    js = np.arange(1, J + 1)
    basis = math.sqrt(2.0 / D) * np.sin(np.pi * np.outer(js, pts) / D)  # (J, npts)
    coeffs = basis @ (wts * vq)
    lam = a * np.pi**2 * js**2 / D**2
    decay = np.exp(-lam * t)
    xs = np.asarray(x, dtype=float)
    basis_x = math.sqrt(2.0 / D) * np.sin(np.pi * np.outer(js, np.atleast_1d(xs)) / D)
    out = (decay * coeffs) @ basis_x
    if xs.ndim == 0:
        return float(out[0])
    return out


def heat_kernel(u, t: float, a: float):
    """Free-space heat kernel exp(-u^2/(4 a t)) / sqrt(4 pi a t)."""
    u = np.asarray(u, dtype=float)
    return np.exp(-(u**2) / (4.0 * a * t)) / math.sqrt(4.0 * math.pi * a * t)


def reflection_semigroup(
    v,
    t: float,
    x: float,
    a: float,
    sign: int = -1,
    window: float | None = None,
    points_per_panel: int = 12,
    panel_width: float | None = None,
) -> float:
    """Half-line semigroup via the reflection method.

    Evaluates int_0^W (Phi(x-y,t) + sign Phi(x+y,t)) v(y) dy with sign -1
    for Dirichlet and +1 for Neumann. The window W defaults to
    x + sqrt(4 a t log(1e26)), putting the neglected kernel mass below
    1e-13; a user-supplied window that leaves more than 1e-12 outside
    triggers a warning.
    """
    if sign not in (-1, 1):
        raise ValueError("sign must be -1 (Dirichlet) or +1 (Neumann)")
    if not (t > 0 and x >= 0):
        raise ValueError("need t > 0 and x >= 0")
    reach = math.sqrt(4.0 * a * t * math.log(1e26))
    if window is None:
        window = x + reach
    else:
        tail = math.exp(-((window - x) ** 2) / (4.0 * a * t)) if window > x else 1.0
        if tail > 1e-12:
            warnings.warn(
                f"kernel mass ~{tail:.2e} outside quadrature window {window}", stacklevel=2
            )
    if panel_width is None:
        panel_width = max(math.sqrt(a * t) / 2.0, window / 4096.0)
    n_panels = max(8, int(math.ceil(window / panel_width)))
    nodes, weights = np.polynomial.legendre.leggauss(points_per_panel)
    edges = np.linspace(0.0, window, n_panels + 1)
    half = (edges[1] - edges[0]) / 2.0
    mids = (edges[:-1] + edges[1:]) / 2.0
    pts = (mids[:, None] + half * nodes[None, :]).ravel()
    wts = np.tile(half * weights, n_panels)
    vq = np.asarray(v(pts), dtype=float)
    kernel = heat_kernel(x - pts, t, a) + sign * heat_kernel(x + pts, t, a)
    return float(wts @ (kernel * vq))


def localization_bound(D: float, x: float, a: float, T: float) -> float:
    """Structural factor exp(-(D-x)^2/(8 a T)) of the pointwise localization
    error for the domain truncated at D; the model-dependent constant in
    front is estimated empirically by the experiments."""
    if not (0 <= x <= D):
        raise ValueError(f"need 0 <= x <= D, got x={x}, D={D}")
    return math.exp(-((D - x) ** 2) / (8.0 * a * T))


def choose_domain(T: float, k: float, a: float, x_max: float, target: float, h: float) -> float:
    """Smallest domain length D >= max(2T - k, x_max) whose localization
    factor at x_max stays below target, rounded up to a multiple of h."""
    if not 0 < target <= 1:
        raise ValueError(f"target must be in (0, 1], got {target}")
    d_min = max(2.0 * T - k, x_max)
    if target < 1.0:
        d_min = max(d_min, x_max + math.sqrt(8.0 * a * T * math.log(1.0 / target)))
    n = int(math.ceil(d_min / h - 1e-12))
    return n * h
