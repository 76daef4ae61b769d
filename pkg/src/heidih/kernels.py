"""Covariance kernels: Matern family, weight-stationary products, and the
reproducing kernel of the fractional Sobolev state space.

A weight-stationary kernel has the form q(x, y) = w(x) q_s(x - y) w(y)
with a stationary Matern part q_s and a positive weight w. The price
scheme's global volatility scale is the ratio of two quadratic forms in
these kernels (eta_scaling).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .bessel import bessel_k


@dataclass(frozen=True)
class MaternParams:
    """Stationary Matern kernel q_s(x) with smoothness nu, correlation
    length mu and variance zeta. nu = 1/2 is the exponential kernel."""

    nu: float
    mu: float
    zeta: float = 1.0

    def __post_init__(self):
        if not (self.nu > 0 and self.mu > 0 and self.zeta > 0):
            raise ValueError(
                f"Matern parameters must be positive: nu={self.nu}, mu={self.mu}, zeta={self.zeta}"
            )

    @property
    def s_w(self) -> float:
        """Sobolev smoothness index nu + 1/2 of the induced sample paths."""
        return self.nu + 0.5


@dataclass(frozen=True)
class WeightFn:
    """Positive weight w(x); kinds: constant one, polynomial decay
    scale*(1+x^2)^(-alpha), or a smooth compactly supported bump
    amplitude*exp(1 - 1/(1 - u^2)) with u = (x-center)/half_width."""

    kind: str
    alpha: float = 0.0
    scale: float = 1.0
    center: float = 0.0
    half_width: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "polynomial", "bump"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "polynomial" and not (self.alpha > 0 and self.scale > 0):
            raise ValueError("polynomial weight needs alpha > 0 and scale > 0")
        if self.kind == "bump" and not (self.half_width > 0 and self.amplitude > 0):
            raise ValueError("bump weight needs half_width > 0 and amplitude > 0")

    @classmethod
    def constant(cls) -> "WeightFn":
        return cls(kind="constant")

    @classmethod
    def polynomial(cls, alpha: float, scale: float = 1.0) -> "WeightFn":
        return cls(kind="polynomial", alpha=alpha, scale=scale)

    @classmethod
    def bump(cls, center: float, half_width: float, amplitude: float = 1.0) -> "WeightFn":
        return cls(kind="bump", center=center, half_width=half_width, amplitude=amplitude)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.ones_like(x)
        if self.kind == "polynomial":
            return self.scale * (1.0 + x * x) ** (-self.alpha)
        u = (x - self.center) / self.half_width
        out = np.zeros_like(x)
        inside = np.abs(u) < 1.0
        ui = u[inside]
        out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - ui * ui))
        return out


@dataclass(frozen=True)
class KernelSpec:
    """Weight-stationary covariance q(x,y) = w(x) q_s(x-y) w(y)."""

    stationary: MaternParams
    weight: WeightFn = field(default_factory=WeightFn.constant)


@dataclass(frozen=True)
class SobolevKernelParams:
    """State-space kernel parameters; the kernel is (x,y) -> 1 + m_r(x-y)."""

    r: float

    def __post_init__(self):
        if not self.r > 0.5:
            raise ValueError(f"smoothness r must exceed 1/2, got {self.r}")


def _kv_array(nu: float, z: np.ndarray) -> np.ndarray:
    out = np.empty(z.shape, dtype=float)
    flat_z = z.ravel()
    flat_o = out.ravel()
    for i, zi in enumerate(flat_z):
        flat_o[i] = bessel_k(nu, zi)
    return out


def matern(params: MaternParams, x) -> float | np.ndarray:
    """Evaluate q_s(x) = zeta 2^(1-nu)/Gamma(nu) (sqrt(2 nu)|x|/mu)^nu
    K_nu(sqrt(2 nu)|x|/mu); the lag-zero value is zeta."""
    x = np.asarray(x, dtype=float)
    z = math.sqrt(2.0 * params.nu) * np.abs(x) / params.mu
    out = np.full(z.shape, params.zeta)
    # below this threshold z^nu K_nu(z) or the order recurrence can overflow;
    # there the relative deviation from the zero-lag limit is <= z^(2 nu),
    # far under double precision for any nu of interest
    tiny = max(2.0 * math.exp(-700.0 / params.nu), 1e-290)
    active = z > tiny
    if np.any(active):
        za = z[active]
        coef = params.zeta * 2.0 ** (1.0 - params.nu) / math.gamma(params.nu)
        out[active] = coef * za**params.nu * _kv_array(params.nu, za)
    if out.ndim == 0:
        return float(out)
    return out


def kernel_eval(spec: KernelSpec, x, y) -> float | np.ndarray:
    """q(x, y) = w(x) q_s(x - y) w(y), elementwise over broadcast inputs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    val = spec.weight(x) * matern(spec.stationary, x - y) * spec.weight(y)
    if val.ndim == 0:
        return float(val)
    return val


def sobolev_kernel(params: SobolevKernelParams, x) -> float | np.ndarray:
    """Stationary kernel m_r(x) = 2^(1-r)/Gamma(r) |x|^(r-1/2) K_{r-1/2}(|x|)
    of H^r on the line (d = 1); m_r(0) = 2^(-1/2) Gamma(r-1/2)/Gamma(r)."""
    r = params.r
    x = np.asarray(np.abs(x), dtype=float)
    s = r - 0.5
    limit = 2.0 ** (-0.5) * math.gamma(s) / math.gamma(r)
    out = np.full(x.shape, limit)
    tiny = max(2.0 * math.exp(-700.0 / s), 1e-290)
    active = x > tiny
    if np.any(active):
        xa = x[active]
        coef = 2.0 ** (1.0 - r) / math.gamma(r)
        out[active] = coef * xa**s * _kv_array(s, xa)
    if out.ndim == 0:
        return float(out)
    return out


def eta_scaling(points, coeffs, r: float, q_b) -> float:
    """Squared scale factor of the price equation's volatility direction.

    For the element eta built from state-space kernel sections at `points`
    with weights `coeffs` and normalized in the H^r (+ constants) norm, the
    scale is the ratio of the q_B quadratic form to the state-space
    quadratic form:

        sum_ij a_i q_B(x_i, x_j) a_j / sum_ij a_i (1 + m_r(x_i - x_j)) a_j.

    `q_b` is a KernelSpec or a callable (x, y) -> value.
    """
    pts = np.asarray(points, dtype=float)
    a = np.asarray(coeffs, dtype=float)
    if pts.shape != a.shape or pts.ndim != 1 or pts.size == 0:
        raise ValueError("points and coeffs must be equal-length 1-d arrays")
    xi = pts[:, None]
    xj = pts[None, :]
    if isinstance(q_b, KernelSpec):
        qmat = kernel_eval(q_b, xi, xj)
    else:
        qmat = np.asarray(q_b(xi, xj), dtype=float)
    mr = sobolev_kernel(SobolevKernelParams(r), xi - xj)
    num = float(a @ qmat @ a)
    den = float(a @ (1.0 + mr) @ a)
    if den <= 1e-12:
        raise ValueError(f"degenerate state-space quadratic form ({den:.3e} <= 1e-12)")
    return num / den


def kernel_matrix(spec: KernelSpec, grid) -> np.ndarray:
    """Covariance matrix q(x_i, x_j) on the given points.

    Uniform grids are detected and evaluated through a table of the N+1
    distinct lags, so the Bessel function runs O(N) times instead of O(N^2).
    """
    pts = np.asarray(grid, dtype=float)
    if pts.ndim != 1 or pts.size == 0:
        raise ValueError("grid must be a nonempty 1-d array")
    n = pts.size
    w = spec.weight(pts)
    if n == 1:
        qs = np.array([[matern(spec.stationary, 0.0)]])
    else:
        diffs = np.diff(pts)
        h = diffs[0]
        if h > 0 and np.all(np.abs(diffs - h) <= 1e-12 * max(abs(h), 1.0)):
            table = matern(spec.stationary, h * np.arange(n))
            idx = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
            qs = table[idx]
        else:
            qs = matern(spec.stationary, pts[:, None] - pts[None, :])
    return w[:, None] * qs * w[None, :]
