"""Coupled multi-resolution Monte Carlo studies of strong convergence.

Every study drives all resolutions of a ladder with the same noise per
sample: coarse spatial noise is the restriction of the fine nodal noise
and coarse time increments are sums of fine ones, so resolution
differences measure discretization error, not sampling noise. The error
statistic is the maximum over shared lattice points of the RMS difference
against the finest (reference) resolution; rates are least-squares slopes
in log2-log2 coordinates.

Sample indices map to generator streams through SeedPolicy, independent of
the worker pool, and partial sums are reduced over fixed-size chunks in
index order, so results are byte-identical for any worker count.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .heat_fem import assemble, solve_path
from .kernels import KernelSpec, MaternParams, WeightFn
from .noise import IncrementStream, NoiseGrid, SeedPolicy, aggregate_time, build_circulant, restrict_to_coarse
from .price_fd import InitialCurve, PriceGrid, beta_increments, solve_x_strided

STUDY_KINDS = ("spatial-y", "temporal-y", "price-grid", "holder", "localization", "timing")
PRICE_RULES = ("h=k", "h=sqrt(k)")
_CHUNK = 5  # fixed reduction granularity; must not depend on the worker count
_NOISE_FLOOR = 1e-13


@dataclass(frozen=True)
class ErrorRow:
    study: str
    param: str
    resolution: float
    error: float
    stderr: float
    wall_s: float


@dataclass(frozen=True)
class RateFit:
    study: str
    param: str
    slope: float
    intercept: float
    residual: float
    points_used: int


@dataclass(frozen=True)
class TimingRow:
    study: str
    param: str
    resolution: float
    wall_s: float
    noise_s: float


@dataclass(frozen=True)
class StudyConfig:
    """All knobs of one study; resolutions are dyadic log2 exponents."""

    kind: str
    nus: tuple = (0.05, 0.5)
    mu: float = 1.0
    zeta: float = 1.0
    weight: WeightFn = field(default_factory=WeightFn.constant)
    embedding_doublings: int = 8
    embedding_tol: float = 1e-8
    a: float = 0.05
    T: float = 1.0
    D: float | None = None
    samples: int = 100
    master_seed: int = 0
    workers: int = 1
    scaling: float = 1.0
    record_walltime: bool = True
    # spatial-y: fixed fine k, ladder in h against a fine h reference
    spatial_k_log2: int = -10
    spatial_h_ref_log2: int = -8
    spatial_h_ladder_log2: tuple = (-3, -4, -5, -6)
    # temporal-y: fixed fine h, ladder in k against a fine k reference;
    # coupled=False redraws independent noise per resolution (diagnostic
    # mode showing why coupling is needed for clean rate fits)
    temporal_h_log2: int = -7
    temporal_k_ref_log2: int = -12
    temporal_k_ladder_log2: tuple = (-4, -5, -6, -7, -8)
    coupled: bool = True
    # price-grid: ladder in the lattice step k under each h(k) rule
    price_rules: tuple = PRICE_RULES
    price_hk_k_ref_log2: int = -10
    price_hk_k_ladder_log2: tuple = (-4, -5, -6)
    price_sq_k_ref_log2: int = -12
    price_sq_k_ladder_log2: tuple = (-4, -6, -8)
    # holder: dyadic time separations at a fine reference resolution
    holder_h_log2: int = -7
    holder_k_log2: int = -10
    holder_sep_log2: tuple = (-8, -7, -6, -5, -4)
    holder_probes: tuple = (0.25, 0.5, 0.75)
    # localization: ladder of truncated domains against the largest one
    loc_h_log2: int = -6
    loc_k_log2: int = -8
    loc_domains: tuple = (1.0, 1.5, 2.0, 2.5, 3.0)
    loc_domain_max: float = 4.0
    loc_probe_x: float = 0.5
    # timing: one-sample build cost per (rule, k)
    timing_k_log2s: tuple = (-8, -10, -12)
    timing_reps: int = 3
    timing_nu: float = 0.5

    def __post_init__(self):
        if self.kind not in STUDY_KINDS:
            raise ValueError(f"unknown study kind {self.kind!r}")
        if self.samples < 2:
            raise ValueError("need at least 2 samples")
        if not self.nus:
            raise ValueError("need at least one kernel smoothness value")
        if self.kind == "spatial-y":
            if any(l < self.spatial_h_ref_log2 for l in self.spatial_h_ladder_log2):
                raise ValueError("spatial ladder must be coarser than the reference")
        if self.kind == "temporal-y":
            if any(l < self.temporal_k_ref_log2 for l in self.temporal_k_ladder_log2):
                raise ValueError("temporal ladder must be coarser than the reference")
        elif not self.coupled:
            raise ValueError("uncoupled sampling is a temporal-y diagnostic only")
        if self.kind == "price-grid":
            for rule in self.price_rules:
                if rule not in PRICE_RULES:
                    raise ValueError(f"unknown grid rule {rule!r}")
            if any(l < self.price_hk_k_ref_log2 for l in self.price_hk_k_ladder_log2):
                raise ValueError("price ladder must be coarser than the reference")
            if "h=sqrt(k)" in self.price_rules:
                exps = tuple(self.price_sq_k_ladder_log2) + (self.price_sq_k_ref_log2,)
                if any(l % 2 != 0 for l in exps):
                    raise ValueError("h=sqrt(k) needs even k exponents for dyadic meshes")
                if any(l < self.price_sq_k_ref_log2 for l in self.price_sq_k_ladder_log2):
                    raise ValueError("price ladder must be coarser than the reference")
        if self.kind == "localization":
            if any(d >= self.loc_domain_max for d in self.loc_domains):
                raise ValueError("domain ladder must stay below the surrogate domain")
            if not 0 < self.loc_probe_x < min(self.loc_domains):
                raise ValueError("probe must lie inside every truncated domain")

    def kernel(self, nu: float) -> KernelSpec:
        return KernelSpec(MaternParams(nu=nu, mu=self.mu, zeta=self.zeta), self.weight)


# ---------------------------------------------------------------------------
# statistics helpers


def fit_loglinear(xs, ys) -> tuple[float, float, float]:
    """OLS slope/intercept/residual RMS of ys against xs."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid**2)))


def fit_rate(resolutions, errors, study: str = "", param: str = "") -> RateFit:
    """Least-squares slope of log2(error) against log2(resolution).

    Positive slope = positive convergence order. When the coarsest point
    sits more than 3x the fit's residual RMS away it is treated as
    pre-asymptotic and dropped once (reported through points_used).
    """
    res = np.asarray(resolutions, dtype=float)
    err = np.asarray(errors, dtype=float)
    if res.size < 3:
        raise ValueError(f"rate fit needs at least 3 points, got {res.size}")
    if np.any(err <= 0):
        raise ValueError("rate fit needs positive errors")
    order = np.argsort(res)  # ascending: coarsest point is the last
    res, err = res[order], err[order]
    xs, ys = np.log2(res), np.log2(err)
    slope, intercept, resid = fit_loglinear(xs, ys)
    used = res.size
    if res.size >= 4:
        # pre-asymptotic guard: hold the coarsest point out and drop it if
        # it misses the line through the finer points by over 3x their
        # residual norm (held out, so one bad point cannot mask itself)
        s2, i2, r2 = fit_loglinear(xs[:-1], ys[:-1])
        if abs(ys[-1] - (s2 * xs[-1] + i2)) > 3.0 * r2:
            slope, intercept, resid = s2, i2, r2
            used = res.size - 1
    return RateFit(study=study, param=param, slope=slope, intercept=intercept, residual=resid, points_used=used)


def max_rms_error(sum_z: np.ndarray, sum_z2: np.ndarray, n: int) -> tuple[float, float]:
    """Max-over-points RMS error and its delta-method standard error.

    sum_z/sum_z2 accumulate the squared differences and their squares per
    shared lattice point. The stderr is that of the mean at the
    max-attaining point (slightly anti-conservative for a maximum).
    """
    mean = sum_z / n
    idx = np.unravel_index(np.argmax(mean), mean.shape)
    m = mean[idx]
    err = math.sqrt(max(m, 0.0))
    if n < 2 or err == 0.0:
        return err, 0.0
    var = max((sum_z2[idx] - n * m * m) / (n - 1), 0.0)
    se_mean = math.sqrt(var / n)
    return err, se_mean / (2.0 * err)


def _combine(parts: list[dict]) -> dict:
    """Sum per-chunk accumulator dicts in chunk order (deterministic)."""
    total = {k: np.array(v, dtype=float, copy=True) for k, v in parts[0].items()}
    for part in parts[1:]:
        for k, v in part.items():
            total[k] += v
    return total


def _run_chunked(worker, payload, cfg: StudyConfig) -> list[dict]:
    bounds = [(lo, min(lo + _CHUNK, cfg.samples)) for lo in range(0, cfg.samples, _CHUNK)]
    tasks = [(payload, lo, hi) for lo, hi in bounds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            return list(ex.map(worker, tasks))
    return [worker(t) for t in tasks]


# ---------------------------------------------------------------------------
# volatility studies (spatial and temporal refinement)


def _spatial_chunk(task):
    (cfg, nu, kernel_index), lo, hi = task
    spec = cfg.kernel(nu)
    D = cfg.D if cfg.D is not None else 1.0
    k = 2.0**cfg.spatial_k_log2
    n_steps = int(round(cfg.T / k))
    fine = NoiseGrid(D=D, N=int(round(D * 2.0**-cfg.spatial_h_ref_log2)))
    sampler = build_circulant(spec.stationary, fine.h, fine.N, cfg.embedding_doublings, cfg.embedding_tol)
    sys_ref = assemble(fine, cfg.a, k)
    ladders = []
    for l in cfg.spatial_h_ladder_log2:
        n_l = int(round(D * 2.0**-l))
        ladders.append((fine.N // n_l, assemble(NoiseGrid(D=D, N=n_l), cfg.a, k)))
    policy = SeedPolicy(cfg.master_seed)
    acc = {}
    for lev, (ratio, _) in enumerate(ladders):
        shape = (n_steps + 1, fine.N // ratio + 1)
        acc[f"z_{lev}"] = np.zeros(shape)
        acc[f"z2_{lev}"] = np.zeros(shape)
    for s in range(lo, hi):
        rng = policy.rng(SeedPolicy.LANE_W, kernel_index * cfg.samples + s)
        stream = IncrementStream(spec, fine, k, sampler, rng)
        incs = stream.sample_block(n_steps)
        ref = solve_path(sys_ref, None, incs, n_steps)
        for lev, (ratio, sys_l) in enumerate(ladders):
            path_l = solve_path(sys_l, None, restrict_to_coarse(incs, ratio), n_steps)
            diff2 = (path_l.values - ref.values[:, ::ratio]) ** 2
            acc[f"z_{lev}"] += diff2
            acc[f"z2_{lev}"] += diff2**2
    return acc


def _temporal_chunk(task):
    (cfg, nu, kernel_index), lo, hi = task
    spec = cfg.kernel(nu)
    D = cfg.D if cfg.D is not None else 1.0
    grid = NoiseGrid(D=D, N=int(round(D * 2.0**-cfg.temporal_h_log2)))
    sampler = build_circulant(spec.stationary, grid.h, grid.N, cfg.embedding_doublings, cfg.embedding_tol)
    k_ref = 2.0**cfg.temporal_k_ref_log2
    n_ref = int(round(cfg.T / k_ref))
    sys_ref = assemble(grid, cfg.a, k_ref)
    ladders = []
    for l in cfg.temporal_k_ladder_log2:
        ladders.append((int(round(2.0**l / k_ref)), assemble(grid, cfg.a, 2.0**l)))
    policy = SeedPolicy(cfg.master_seed)
    acc = {}
    for lev, (ratio, _) in enumerate(ladders):
        shape = (n_ref // ratio + 1, grid.N + 1)
        acc[f"z_{lev}"] = np.zeros(shape)
        acc[f"z2_{lev}"] = np.zeros(shape)
    for s in range(lo, hi):
        rng = policy.rng(SeedPolicy.LANE_W, kernel_index * cfg.samples + s)
        stream = IncrementStream(spec, grid, k_ref, sampler, rng)
        incs = stream.sample_block(n_ref)
        ref = solve_path(sys_ref, None, incs, n_ref)
        for lev, (ratio, sys_l) in enumerate(ladders):
            n_l = n_ref // ratio
            if cfg.coupled:
                incs_l = aggregate_time(incs, ratio)
            else:
                # diagnostic: independent draw at the coarse resolution,
                # from a level-specific lane so streams never overlap
                rng_l = policy.rng(2 + lev, kernel_index * cfg.samples + s)
                stream_l = IncrementStream(spec, grid, ratio * k_ref, sampler, rng_l)
                incs_l = stream_l.sample_block(n_l)
            path_l = solve_path(sys_l, None, incs_l, n_l)
            diff2 = (path_l.values - ref.values[::ratio]) ** 2
            acc[f"z_{lev}"] += diff2
            acc[f"z2_{lev}"] += diff2**2
    return acc


def _y_study(cfg, chunk_fn, ladder_log2) -> tuple[list[ErrorRow], list[RateFit]]:
    rows, fits = [], []
    for kernel_index, nu in enumerate(cfg.nus):
        started = time.perf_counter()
        total = _combine(_run_chunked(chunk_fn, (cfg, nu, kernel_index), cfg))
        wall = time.perf_counter() - started if cfg.record_walltime else 0.0
        param = f"sW={nu + 0.5:g}"
        resolutions, errors = [], []
        for lev, l in enumerate(ladder_log2):
            err, se = max_rms_error(total[f"z_{lev}"], total[f"z2_{lev}"], cfg.samples)
            rows.append(ErrorRow(cfg.kind, param, 2.0**l, err, se, wall))
            resolutions.append(2.0**l)
            errors.append(err)
        fits.append(fit_rate(resolutions, errors, study=cfg.kind, param=param))
    return rows, fits


def spatial_study(cfg: StudyConfig) -> tuple[list[ErrorRow], list[RateFit]]:
    """Fixed fine k, spatial ladder against a fine h reference; the fitted
    rate tracks min(s_W, 1)."""
    if cfg.kind != "spatial-y":
        cfg = replace(cfg, kind="spatial-y")
    return _y_study(cfg, _spatial_chunk, cfg.spatial_h_ladder_log2)


def temporal_study(cfg: StudyConfig) -> tuple[list[ErrorRow], list[RateFit]]:
    """Fixed fine h, temporal ladder against a fine k reference; the fitted
    rate stays near 1/2 for every s_W."""
    if cfg.kind != "temporal-y":
        cfg = replace(cfg, kind="temporal-y")
    return _y_study(cfg, _temporal_chunk, cfg.temporal_k_ladder_log2)


def mc_pointwise_error(cfg: StudyConfig, resolution_log2: int) -> tuple[float, float]:
    """Coupled MC estimate of the max-over-lattice RMS error of one ladder
    resolution against the configured reference, with its standard error.

    Valid for the spatial-y and temporal-y kinds; uses the first kernel of
    the sweep.
    """
    if cfg.kind == "spatial-y":
        cfg = replace(cfg, spatial_h_ladder_log2=(resolution_log2,))
        chunk_fn = _spatial_chunk
    elif cfg.kind == "temporal-y":
        cfg = replace(cfg, temporal_k_ladder_log2=(resolution_log2,))
        chunk_fn = _temporal_chunk
    else:
        raise ValueError(f"pointwise error is defined for Y studies, not {cfg.kind!r}")
    total = _combine(_run_chunked(chunk_fn, (cfg, cfg.nus[0], 0), cfg))
    return max_rms_error(total["z_0"], total["z2_0"], cfg.samples)


# ---------------------------------------------------------------------------
# price grid study


def _price_resolution(cfg: StudyConfig, rule: str):
    if rule == "h=k":
        return cfg.price_hk_k_ref_log2, tuple(cfg.price_hk_k_ladder_log2)
    return cfg.price_sq_k_ref_log2, tuple(cfg.price_sq_k_ladder_log2)


def _h_exponent(rule: str, k_log2: int) -> int:
    return k_log2 if rule == "h=k" else k_log2 // 2


def _price_sample(cfg, spec, sampler, fine, sys_ref, grid_ref, levels, stride_ref, w_rng, b_rng):
    """One coupled draw: reference X values on the finest ladder lattice and
    each level's X values on its own lattice."""
    k_ref = grid_ref.k
    n_ref = grid_ref.n_steps
    curve = InitialCurve(level=0.0)  # drift cancels exactly in coupled differences
    stream = IncrementStream(spec, fine, k_ref, sampler, w_rng)
    incs = stream.sample_block(n_ref)
    beta = beta_increments(b_rng, n_ref, k_ref)
    y_ref = solve_path(sys_ref, None, incs, n_ref)
    x_ref = solve_x_strided(grid_ref, curve, cfg.scaling, y_ref, beta, stride=stride_ref)
    per_level = []
    for level in levels:
        incs_l = aggregate_time(incs, level["t_ratio"])
        if level["x_ratio"] > 1:
            incs_l = restrict_to_coarse(incs_l, level["x_ratio"])
        y_l = solve_path(level["system"], None, incs_l, level["n_steps"])
        beta_l = aggregate_time(beta, level["t_ratio"])
        x_l = solve_x_strided(level["price_grid"], curve, cfg.scaling, y_l, beta_l, stride=1)
        per_level.append(x_l)
    return x_ref, per_level


def _price_setup(cfg, nu, rule):
    spec = cfg.kernel(nu)
    k_ref_log2, ladder = _price_resolution(cfg, rule)
    k_ref = 2.0**k_ref_log2
    D = cfg.D if cfg.D is not None else 2.0 * cfg.T
    h_fine = 2.0 ** _h_exponent(rule, k_ref_log2)
    fine = NoiseGrid(D=D, N=int(round(D / h_fine)))
    sampler = build_circulant(spec.stationary, fine.h, fine.N, cfg.embedding_doublings, cfg.embedding_tol)
    sys_ref = assemble(fine, cfg.a, k_ref)
    grid_ref = PriceGrid(T=cfg.T, k=k_ref)
    finest = min(ladder)
    stride_ref = int(round(2.0**finest / k_ref))
    levels = []
    for l in ladder:
        k_l = 2.0**l
        h_l = 2.0 ** _h_exponent(rule, l)
        grid_l = NoiseGrid(D=D, N=int(round(D / h_l)))
        levels.append(
            dict(
                k=k_l,
                t_ratio=int(round(k_l / k_ref)),
                x_ratio=int(round(h_l / h_fine)),
                system=assemble(grid_l, cfg.a, k_l),
                price_grid=PriceGrid(T=cfg.T, k=k_l),
                n_steps=int(round(cfg.T / k_l)),
                shared_stride=int(round(k_l / 2.0**finest)),
            )
        )
    return spec, sampler, fine, sys_ref, grid_ref, levels, stride_ref


def _price_chunk(task):
    (cfg, nu, rule, stream_index), lo, hi = task
    spec, sampler, fine, sys_ref, grid_ref, levels, stride_ref = _price_setup(cfg, nu, rule)
    policy = SeedPolicy(cfg.master_seed)
    acc = {}
    for lev, level in enumerate(levels):
        shape = (level["n_steps"] + 1, level["n_steps"] + 1)
        acc[f"z_{lev}"] = np.zeros(shape)
        acc[f"z2_{lev}"] = np.zeros(shape)
    for s in range(lo, hi):
        sample_key = stream_index * cfg.samples + s
        w_rng = policy.rng(SeedPolicy.LANE_W, sample_key)
        b_rng = policy.rng(SeedPolicy.LANE_BETA, sample_key)
        x_ref, per_level = _price_sample(
            cfg, spec, sampler, fine, sys_ref, grid_ref, levels, stride_ref, w_rng, b_rng
        )
        for lev, level in enumerate(levels):
            r = level["shared_stride"]
            diff2 = (per_level[lev] - x_ref[::r, ::r]) ** 2
            acc[f"z_{lev}"] += diff2
            acc[f"z2_{lev}"] += diff2**2
    return acc


def price_grid_study(cfg: StudyConfig) -> tuple[list[ErrorRow], list[RateFit]]:
    """Grid-rule tradeoff: with h = k the rate is near 1/2 for every s_W;
    with h = sqrt(k) it survives only for s_W >= 1."""
    if cfg.kind != "price-grid":
        cfg = replace(cfg, kind="price-grid")
    rows, fits = [], []
    stream_index = 0
    for rule in cfg.price_rules:
        _, ladder = _price_resolution(cfg, rule)
        for nu in cfg.nus:
            started = time.perf_counter()
            total = _combine(_run_chunked(_price_chunk, (cfg, nu, rule, stream_index), cfg))
            wall = time.perf_counter() - started if cfg.record_walltime else 0.0
            stream_index += 1
            param = f"sW={nu + 0.5:g},{rule}"
            resolutions, errors = [], []
            for lev, l in enumerate(ladder):
                err, se = max_rms_error(total[f"z_{lev}"], total[f"z2_{lev}"], cfg.samples)
                rows.append(ErrorRow(cfg.kind, param, 2.0**l, err, se, wall))
                resolutions.append(2.0**l)
                errors.append(err)
            fits.append(fit_rate(resolutions, errors, study=cfg.kind, param=param))
    return rows, fits


# ---------------------------------------------------------------------------
# temporal Hölder regularity study


def _holder_chunk(task):
    (cfg, nu, kernel_index), lo, hi = task
    spec = cfg.kernel(nu)
    D = cfg.D if cfg.D is not None else 1.0
    grid = NoiseGrid(D=D, N=int(round(D * 2.0**-cfg.holder_h_log2)))
    sampler = build_circulant(spec.stationary, grid.h, grid.N, cfg.embedding_doublings, cfg.embedding_tol)
    k = 2.0**cfg.holder_k_log2
    n_steps = int(round(cfg.T / k))
    sys_ = assemble(grid, cfg.a, k)
    seps = [int(round(2.0**l / k)) for l in cfg.holder_sep_log2]
    if any(s < 1 or s > n_steps for s in seps):
        raise ValueError("separations must lie between the time step and the horizon")
    probes = np.asarray(cfg.holder_probes, dtype=float)
    policy = SeedPolicy(cfg.master_seed)
    acc = {
        "z": np.zeros((len(seps), probes.size)),
        "z2": np.zeros((len(seps), probes.size)),
    }
    for s in range(lo, hi):
        rng = policy.rng(SeedPolicy.LANE_W, kernel_index * cfg.samples + s)
        stream = IncrementStream(spec, grid, k, sampler, rng)
        path = solve_path(sys_, None, stream.sample_block(n_steps), n_steps)
        end_vals = path.eval_pointwise(n_steps, probes)
        for i, sep in enumerate(seps):
            z = (end_vals - path.eval_pointwise(n_steps - sep, probes)) ** 2
            acc["z"][i] += z
            acc["z2"][i] += z**2
    return acc


def holder_study(cfg: StudyConfig) -> tuple[list[ErrorRow], list[RateFit]]:
    """Fit of log E|Y(t,x) - Y(s,x)|^2 against log|t - s| near the horizon;
    slopes are reported on the squared-error scale (RMS exponent is half)."""
    if cfg.kind != "holder":
        cfg = replace(cfg, kind="holder")
    rows, fits = [], []
    for kernel_index, nu in enumerate(cfg.nus):
        started = time.perf_counter()
        total = _combine(_run_chunked(_holder_chunk, (cfg, nu, kernel_index), cfg))
        wall = time.perf_counter() - started if cfg.record_walltime else 0.0
        mean_sq = total["z"] / cfg.samples  # (separations, probes)
        seps = np.array([2.0**l for l in cfg.holder_sep_log2])
        slopes = []
        for p, probe in enumerate(cfg.holder_probes):
            param = f"sW={nu + 0.5:g},x={probe:g}"
            for i, sep in enumerate(seps):
                var = max((total["z2"][i, p] - cfg.samples * mean_sq[i, p] ** 2) / (cfg.samples - 1), 0.0)
                se_mean = math.sqrt(var / cfg.samples)
                rms = math.sqrt(mean_sq[i, p])
                se_rms = se_mean / (2 * rms) if rms > 0 else 0.0
                rows.append(ErrorRow(cfg.kind, param, float(sep), rms, se_rms, wall))
            slope, intercept, resid = fit_loglinear(np.log2(seps), np.log2(mean_sq[:, p]))
            fits.append(RateFit(cfg.kind, param, slope, intercept, resid, len(seps)))
            slopes.append(slope)
        fits.append(
            RateFit(cfg.kind, f"sW={nu + 0.5:g},pooled", float(np.mean(slopes)), 0.0, float(np.std(slopes)), len(seps))
        )
    return rows, fits


# ---------------------------------------------------------------------------
# localization study


def _localization_chunk(task):
    (cfg, nu, kernel_index), lo, hi = task
    spec = cfg.kernel(nu)
    h = 2.0**cfg.loc_h_log2
    k = 2.0**cfg.loc_k_log2
    n_steps = int(round(cfg.T / k))
    big = NoiseGrid(D=cfg.loc_domain_max, N=int(round(cfg.loc_domain_max / h)))
    sampler = build_circulant(spec.stationary, big.h, big.N, cfg.embedding_doublings, cfg.embedding_tol)
    sys_big = assemble(big, cfg.a, k)
    systems = []
    for d in cfg.loc_domains:
        n_d = int(round(d / h))
        if abs(n_d * h - d) > 1e-9:
            raise ValueError(f"domain {d} is not a multiple of the mesh width {h}")
        systems.append((n_d, assemble(NoiseGrid(D=d, N=n_d), cfg.a, k)))
    probe_idx = int(round(cfg.loc_probe_x / h))
    if abs(probe_idx * h - cfg.loc_probe_x) > 1e-9:
        raise ValueError("probe must sit on the mesh")
    policy = SeedPolicy(cfg.master_seed)
    acc = {"z": np.zeros(len(systems)), "z2": np.zeros(len(systems))}
    for s in range(lo, hi):
        rng = policy.rng(SeedPolicy.LANE_W, kernel_index * cfg.samples + s)
        stream = IncrementStream(spec, big, k, sampler, rng)
        incs = stream.sample_block(n_steps)
        ref_val = solve_path(sys_big, None, incs, n_steps).values[n_steps, probe_idx]
        for i, (n_d, sys_d) in enumerate(systems):
            path = solve_path(sys_d, None, incs[:, : n_d + 1], n_steps)
            z = (path.values[n_steps, probe_idx] - ref_val) ** 2
            acc["z"][i] += z
            acc["z2"][i] += z**2
    return acc


def localization_study(cfg: StudyConfig) -> tuple[list[ErrorRow], list[RateFit]]:
    """Decay of the truncation error in the domain length: the log RMS error
    against (D - x)^2 must fall at least as fast as -0.8/(8 a T)."""
    if cfg.kind != "localization":
        cfg = replace(cfg, kind="localization")
    rows, fits = [], []
    for kernel_index, nu in enumerate(cfg.nus):
        started = time.perf_counter()
        total = _combine(_run_chunked(_localization_chunk, (cfg, nu, kernel_index), cfg))
        wall = time.perf_counter() - started if cfg.record_walltime else 0.0
        param = f"sW={nu + 0.5:g},x={cfg.loc_probe_x:g}"
        mean_sq = total["z"] / cfg.samples
        rms = np.sqrt(mean_sq)
        for i, d in enumerate(cfg.loc_domains):
            var = max((total["z2"][i] - cfg.samples * mean_sq[i] ** 2) / (cfg.samples - 1), 0.0)
            se = math.sqrt(var / cfg.samples) / (2 * rms[i]) if rms[i] > 0 else 0.0
            rows.append(ErrorRow(cfg.kind, param, float(d), float(rms[i]), se, wall))
        keep = rms > _NOISE_FLOOR
        ds = np.asarray(cfg.loc_domains, dtype=float)[keep]
        if keep.sum() < 2:
            raise RuntimeError("localization errors below the noise floor at every domain")
        xs = (ds - cfg.loc_probe_x) ** 2
        slope, intercept, resid = fit_loglinear(xs, np.log(rms[keep]))
        fits.append(RateFit(cfg.kind, param, slope, intercept, resid, int(keep.sum())))
    return rows, fits


# ---------------------------------------------------------------------------
# timing study


def time_one_sample(cfg: StudyConfig, rule: str, k_log2: int, seed_sample: int = 0) -> tuple[float, float]:
    """Wall seconds of one full price sample (noise + volatility + lattice)
    and the share spent sampling noise."""
    run_cfg = replace(
        cfg,
        kind="price-grid",
        price_hk_k_ref_log2=k_log2,
        price_hk_k_ladder_log2=(k_log2,),
        price_sq_k_ref_log2=k_log2,
        price_sq_k_ladder_log2=(k_log2,),
    )
    spec, sampler, fine, sys_ref, grid_ref, levels, stride_ref = _price_setup(run_cfg, cfg.timing_nu, rule)
    policy = SeedPolicy(cfg.master_seed)
    w_rng = policy.rng(SeedPolicy.LANE_W, seed_sample)
    b_rng = policy.rng(SeedPolicy.LANE_BETA, seed_sample)
    n_ref = grid_ref.n_steps
    curve = InitialCurve(level=0.0)
    t0 = time.perf_counter()
    stream = IncrementStream(spec, fine, grid_ref.k, sampler, w_rng)
    incs = stream.sample_block(n_ref)
    t1 = time.perf_counter()
    beta = beta_increments(b_rng, n_ref, grid_ref.k)
    y = solve_path(sys_ref, None, incs, n_ref)
    solve_x_strided(grid_ref, curve, cfg.scaling, y, beta, stride=stride_ref)
    t2 = time.perf_counter()
    return t2 - t0, t1 - t0


def timing_study(cfg: StudyConfig) -> list[TimingRow]:
    """Per-sample build cost for each grid rule over the k ladder; the
    h = sqrt(k) rule must win at fine resolutions."""
    if cfg.kind != "timing":
        cfg = replace(cfg, kind="timing")
    rows = []
    for rule in cfg.price_rules:
        for k_log2 in cfg.timing_k_log2s:
            if rule == "h=sqrt(k)" and k_log2 % 2 != 0:
                raise ValueError("h=sqrt(k) timing needs even k exponents")
            best = math.inf
            best_noise = 0.0
            for rep in range(cfg.timing_reps):
                wall, noise_s = time_one_sample(cfg, rule, k_log2, seed_sample=rep)
                if wall < best:
                    best, best_noise = wall, noise_s
            rows.append(
                TimingRow("timing", f"sW={cfg.timing_nu + 0.5:g},{rule}", 2.0**k_log2, best, best_noise)
            )
    return rows


def run_study(cfg: StudyConfig):
    """Dispatch on the configured kind; returns (error rows, rate fits) or
    timing rows."""
    if cfg.kind == "spatial-y":
        return spatial_study(cfg)
    if cfg.kind == "temporal-y":
        return temporal_study(cfg)
    if cfg.kind == "price-grid":
        return price_grid_study(cfg)
    if cfg.kind == "holder":
        return holder_study(cfg)
    if cfg.kind == "localization":
        return localization_study(cfg)
    if cfg.kind == "timing":
        return timing_study(cfg)
    raise ValueError(f"unknown study kind {cfg.kind!r}")
