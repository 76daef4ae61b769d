"""Pointwise-in-space sampling of the driving Wiener increments.

On a uniform grid the nodal values of one Wiener increment form a Gaussian
vector with covariance k q_W(x_i, x_j) = k w(x_i) q_s((i-j)h) w(x_j). The
stationary factor is sampled in O(N log N) by circulant embedding of its
Toeplitz covariance; the weight and the sqrt(k) step scale are applied
nodewise afterwards. A dense Cholesky sampler serves as oracle/fallback.

Multi-resolution coupling is exact for pointwise sampling: coarse-grid
nodal noise is a sub-vector of fine-grid nodal noise (restrict_to_coarse)
and coarse-step increments are sums of fine-step increments (aggregate_time).
"""

import struct
from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, MaternParams, kernel_matrix, matern

DUMP_MAGIC_NOISE = b"HDWN"
DUMP_MAGIC_YPATH = b"HDYP"
_DUMP_VERSION = 1


class EmbeddingError(RuntimeError):
    """Circulant embedding kept a negative spectral mass above tolerance."""


class FactorizationError(RuntimeError):
    """Dense covariance factorization failed beyond the ridge allowance."""


@dataclass(frozen=True)
class NoiseGrid:
    """Uniform nodes x_j = j h, j = 0..N, on [0, D] with h = D / N."""

    D: float
    N: int

    def __post_init__(self):
        if not (self.D > 0 and self.N >= 1):
            raise ValueError(f"need D > 0 and N >= 1, got D={self.D}, N={self.N}")

    @property
    def h(self) -> float:
        return self.D / self.N

    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.D, self.N + 1)


@dataclass(frozen=True)
class SeedPolicy:
    """Derivation of independent per-sample generator streams.

    Stream (lane, sample) is seeded by SeedSequence(master_seed,
    spawn_key=(lane, sample)), a pure function of its arguments, so noise is
    bit-identical for a given sample index no matter how samples are
    distributed over workers. Lane 0 carries the volatility noise W and
    lane 1 the price driver increments.
    """

    master_seed: int

    LANE_W = 0
    LANE_BETA = 1

    def rng(self, lane: int, sample: int) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(lane, sample))
        return np.random.default_rng(seq)


class CirculantSampler:
    """Precomputed spectral state for stationary sampling on a uniform grid.

    lam holds the M nonnegative eigenvalues of the embedded circulant;
    clip_mass is the total magnitude of negative eigenvalues that were
    clipped to zero (relative share recorded in clip_rel).
    """

    def __init__(self, M: int, lam: np.ndarray, clip_mass: float, clip_rel: float, h: float, N: int):
        self.M = M
        self.lam = lam
        self.clip_mass = clip_mass
        self.clip_rel = clip_rel
        self.h = h
        self.N = N
        # per-mode standard deviations of the complex spectral coefficients
        self._scale = np.sqrt(lam / M)
        self.lam.flags.writeable = False
        self._scale.flags.writeable = False

    def induced_covariance_row(self) -> np.ndarray:
        """First row of the covariance actually produced, at lags 0..N.

        Equals the target q_s(j h) exactly when clip_mass = 0.
        """
        row = np.fft.ifft(self.lam).real
        return row[: self.N + 1]

    def sample_pair(self, rng: np.random.Generator):
        """Two independent stationary fields (length N+1) from one transform."""
        z = rng.standard_normal(2 * self.M)
        coeff = self._scale * (z[: self.M] + 1j * z[self.M :])
        w = np.fft.fft(coeff)
        return w.real[: self.N + 1], w.imag[: self.N + 1]


class StationaryStream:
    """Per-sample sampling cursor over a shared CirculantSampler.

    Buffers the second field of each complex transform so consecutive calls
    cost one FFT per two fields.
    """

    def __init__(self, sampler: CirculantSampler, rng: np.random.Generator):
        self.sampler = sampler
        self.rng = rng
        self._spare = None

    def sample(self) -> np.ndarray:
        if self._spare is not None:
            out, self._spare = self._spare, None
            return out
        out, self._spare = self.sampler.sample_pair(self.rng)
        return out

    def sample_block(self, count: int) -> np.ndarray:
        """(count, N+1) array of independent fields; batches the transforms."""
        m = self.sampler.M
        pairs = (count + 1) // 2
        z = self.rng.standard_normal((pairs, 2 * m))
        coeff = self.sampler._scale * (z[:, :m] + 1j * z[:, m:])
        w = np.fft.fft(coeff, axis=1)[:, : self.sampler.N + 1]
        out = np.empty((2 * pairs, self.sampler.N + 1))
        out[0::2] = w.real
        out[1::2] = w.imag
        return out[:count]


def _stationary_fn(stationary):
    if isinstance(stationary, MaternParams):
        return lambda lags: matern(stationary, lags)
    if callable(stationary):
        return lambda lags: np.asarray(stationary(lags), dtype=float)
    raise TypeError("stationary must be MaternParams or a callable of the lag")


def build_circulant(stationary, h: float, N: int, max_doublings: int = 8, tol: float = 1e-8) -> CirculantSampler:
    """Embed the Toeplitz covariance q_s(j h), j = 0..N, into a circulant.

    The embedding size starts at the smallest power of two >= 2N and doubles
    while the relative negative spectral mass exceeds tol; below tol the
    negative eigenvalues are clipped to zero and the clipped mass recorded.
    """
    if N < 1 or h <= 0:
        raise ValueError(f"need N >= 1 and h > 0, got N={N}, h={h}")
    qs = _stationary_fn(stationary)
    m = 1 << max(1, int(np.ceil(np.log2(2 * N))))
    for _ in range(max_doublings + 1):
        # first circulant row: q_s(h min(j, M-j)), built from lags 0..M/2
        row = qs(h * np.arange(m // 2 + 1))
        full = np.concatenate([row, row[-2:0:-1]])
        lam = np.fft.fft(full).real
        neg = lam < 0.0
        clip_mass = float(-lam[neg].sum()) + 0.0  # normalize -0.0
        total = float(np.abs(lam).sum())
        clip_rel = clip_mass / total if total > 0 else 0.0
        if clip_rel <= tol:
            lam = np.where(neg, 0.0, lam)
            return CirculantSampler(m, lam, clip_mass, clip_rel, h, N)
        m *= 2
    raise EmbeddingError(
        f"negative spectral mass {clip_rel:.3e} above tolerance {tol:.1e} "
        f"after {max_doublings} doublings (final size {m // 2})"
    )


def sample_stationary(sampler: CirculantSampler, rng: np.random.Generator) -> np.ndarray:
    """One mean-zero field with covariance q_s((i-j)h) on nodes 0..N.

    Single-shot convenience; path solvers use StationaryStream, which also
    consumes the second field each transform produces.
    """
    field, _ = sampler.sample_pair(rng)
    return field


def sample_increment(
    spec: KernelSpec, grid: NoiseGrid, k: float, sampler: CirculantSampler, rng: np.random.Generator
) -> np.ndarray:
    """Nodal values of one Wiener increment with covariance k q_W(x_i, x_j)."""
    if not k > 0:
        raise ValueError(f"time step must be positive, got {k}")
    field = sample_stationary(sampler, rng)
    return np.sqrt(k) * spec.weight(grid.nodes()) * field


class IncrementStream:
    """Stream of nodal Wiener increments sqrt(k) w(x_j) (stationary field)_j."""

    def __init__(self, spec: KernelSpec, grid: NoiseGrid, k: float, sampler: CirculantSampler, rng: np.random.Generator):
        if not k > 0:
            raise ValueError(f"time step must be positive, got {k}")
        self._stream = StationaryStream(sampler, rng)
        self._factor = np.sqrt(k) * spec.weight(grid.nodes())

    def sample(self) -> np.ndarray:
        return self._factor * self._stream.sample()

    def sample_block(self, count: int) -> np.ndarray:
        return self._factor * self._stream.sample_block(count)


class CholeskySampler:
    """Exact-covariance sampler via dense factorization; O(N^3) setup.

    Used as oracle for the circulant path and as fallback for kernels that
    do not factor through a stationary part. A relative ridge of
    1e-12 max(diag) is added once if the matrix is numerically indefinite.
    """

    def __init__(self, spec: KernelSpec, grid: NoiseGrid):
        cov = kernel_matrix(spec, grid.nodes())
        try:
            self._chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            ridge = 1e-12 * cov.diagonal().max()
            try:
                self._chol = np.linalg.cholesky(cov + ridge * np.eye(cov.shape[0]))
            except np.linalg.LinAlgError as exc:
                raise FactorizationError("covariance matrix indefinite beyond ridge") from exc
        self.covariance = cov

    def sample(self, k: float, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(self._chol.shape[0])
        return np.sqrt(k) * (self._chol @ z)


def cholesky_sample(spec: KernelSpec, grid: NoiseGrid, k: float, rng: np.random.Generator) -> np.ndarray:
    """One increment drawn through a dense Cholesky factorization."""
    if not k > 0:
        raise ValueError(f"time step must be positive, got {k}")
    return CholeskySampler(spec, grid).sample(k, rng)


def restrict_to_coarse(values: np.ndarray, ratio: int) -> np.ndarray:
    """Every ratio-th nodal value along the last axis.

    Exact coupling: pointwise-sampled coarse nodal noise is a sub-vector of
    the fine nodal noise.
    """
    values = np.asarray(values)
    if ratio < 1:
        raise ValueError(f"ratio must be >= 1, got {ratio}")
    n_fine = values.shape[-1] - 1
    if n_fine % ratio != 0:
        raise ValueError(f"fine interval count {n_fine} not divisible by ratio {ratio}")
    return values[..., ::ratio]


def aggregate_time(increments: np.ndarray, ratio: int) -> np.ndarray:
    """Sum consecutive groups of `ratio` fine-step increments (axis 0)."""
    increments = np.asarray(increments)
    if ratio < 1:
        raise ValueError(f"ratio must be >= 1, got {ratio}")
    n = increments.shape[0]
    if n % ratio != 0:
        raise ValueError(f"fine step count {n} not divisible by ratio {ratio}")
    if ratio == 1:
        return increments.copy()
    shape = (n // ratio, ratio) + increments.shape[1:]
    return increments.reshape(shape).sum(axis=1)


def write_field_dump(path, values: np.ndarray, magic: bytes = DUMP_MAGIC_NOISE) -> None:
    """Binary dump: 32-byte header (magic, version, N, steps, reserved) then
    the row-major time x node float64 little-endian payload."""
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim != 2:
        raise ValueError("expected a 2-d (time x node) array")
    steps, nodes = values.shape
    header = struct.pack("<4sIQQ8x", magic, _DUMP_VERSION, nodes - 1, steps)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.tobytes())


def read_field_dump(path, expected_magic: bytes | None = None):
    """Read a dump written by write_field_dump; returns (magic, values)."""
    with open(path, "rb") as fh:
        header = fh.read(32)
        magic, version, n, steps = struct.unpack("<4sIQQ8x", header)
        if expected_magic is not None and magic != expected_magic:
            raise ValueError(f"bad magic {magic!r}, expected {expected_magic!r}")
        if version != _DUMP_VERSION:
            raise ValueError(f"unsupported dump version {version}")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    return magic, payload.reshape(steps, n + 1)
