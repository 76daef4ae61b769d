"""Command-line surface: run studies, draw single paths, dump kernels.

Exit codes: 0 on success, 2 when a strict-mode slope window is violated,
64 on bad flags, 1 on configuration or runtime errors.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import csvio
from .config import ConfigError, ParsedConfig, parse_config
from .experiments import RateFit, StudyConfig, run_study, timing_study
from .heat_fem import assemble, solve_path
from .kernels import kernel_matrix
from .noise import DUMP_MAGIC_YPATH, IncrementStream, NoiseGrid, SeedPolicy, build_circulant, write_field_dump
from .price_fd import InitialCurve, PriceGrid, beta_increments, solve_x

USAGE_ERROR = 64
STRICT_VIOLATION = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="heidih", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--samples", type=int, help="override run.samples")
        p.add_argument("--workers", type=int, help="override run.workers")
        p.add_argument("--out", default=".", help="output directory (studies) or file (samples)")

    conv = sub.add_parser("convergence", help="run a convergence study, emit errors.csv and rates.csv")
    common(conv)
    conv.add_argument("--study", help="study kind, overrides [study].kind")
    conv.add_argument("--strict", action="store_true", help="exit 2 when a strict slope window fails")

    loc = sub.add_parser("localization", help="run the domain-truncation study")
    common(loc)
    loc.add_argument("--strict", action="store_true")

    tim = sub.add_parser("timing", help="per-sample cost of the grid rules, emit timing.csv")
    common(tim)

    sy = sub.add_parser("sample-y", help="draw one volatility path, emit CSV or binary dump")
    common(sy)

    sx = sub.add_parser("sample-x", help="draw one price surface, emit CSV")
    common(sx)

    kt = sub.add_parser("kernel-table", help="tabulate the covariance kernel on a grid")
    common(kt)
    return parser


def _overridden(parsed: ParsedConfig, args) -> dict:
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.samples is not None:
        overrides["samples"] = args.samples
    if args.workers is not None:
        overrides["workers"] = args.workers
    return overrides


def _check_strict(parsed: ParsedConfig, fits: list[RateFit]) -> list[str]:
    violations = []
    by_param = {rule.param: rule for rule in parsed.strict_rules}
    for fit in fits:
        rule = by_param.get(fit.param) or by_param.get(f"{fit.study}.{fit.param}")
        if rule is None:
            continue
        if rule.min_slope is not None and fit.slope < rule.min_slope:
            violations.append(f"{fit.study} {fit.param}: slope {fit.slope:.4f} < {rule.min_slope}")
        if rule.max_slope is not None and fit.slope > rule.max_slope:
            violations.append(f"{fit.study} {fit.param}: slope {fit.slope:.4f} > {rule.max_slope}")
    return violations


def _run_convergence(parsed: ParsedConfig, args, kind: str | None) -> int:
    cfg = parsed.study_config(kind=kind, **_overridden(parsed, args))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, fits = run_study(cfg)
    csvio.emit_csv(rows, out_dir / "errors.csv", csvio.ERRORS_HEADER)
    csvio.emit_csv(fits, out_dir / "rates.csv", csvio.RATES_HEADER)
    for fit in fits:
        print(f"{fit.study} {fit.param}: slope {fit.slope:.4f} over {fit.points_used} points")
    if getattr(args, "strict", False):
        violations = _check_strict(parsed, fits)
        for line in violations:
            print(f"STRICT VIOLATION: {line}", file=sys.stderr)
        if violations:
            return STRICT_VIOLATION
    return 0


def _run_timing(parsed: ParsedConfig, args) -> int:
    cfg = parsed.study_config(kind="timing", **_overridden(parsed, args))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = timing_study(cfg)
    csvio.emit_csv(rows, out_dir / "timing.csv", csvio.TIMING_HEADER)
    for row in rows:
        print(f"timing {row.param} k={row.resolution:g}: {row.wall_s:.4f}s (noise {row.noise_s:.4f}s)")
    return 0


def _sample_curve(parsed: ParsedConfig) -> InitialCurve:
    s = parsed.sample
    if s.curve_bump_amplitude > 0:

        def bump(x):
            x = np.asarray(x, dtype=float)
            u = (x - s.curve_bump_center) / s.curve_bump_half_width
            out = np.zeros_like(x)
            inside = np.abs(u) < 1.0
            out[inside] = s.curve_bump_amplitude * np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
            return out

        return InitialCurve(smooth_part=bump, level=s.curve_level)
    return InitialCurve(level=s.curve_level)


def _sample_y_path(parsed: ParsedConfig, seed: int):
    kernel = parsed.kernel()
    D = parsed.domain if parsed.domain is not None else 2.0 * parsed.T
    h = 2.0**parsed.sample.h_log2
    k = 2.0**parsed.sample.k_log2
    grid = NoiseGrid(D=D, N=int(round(D / h)))
    sampler = build_circulant(kernel.stationary, grid.h, grid.N, parsed.embedding_doublings, parsed.embedding_tol)
    system = assemble(grid, parsed.a, k)
    n_steps = int(round(parsed.T / k))
    policy = SeedPolicy(seed)
    stream = IncrementStream(kernel, grid, k, sampler, policy.rng(SeedPolicy.LANE_W, 0))
    return solve_path(system, None, stream.sample_block(n_steps), n_steps), policy


def _run_sample_y(parsed: ParsedConfig, args) -> int:
    seed = args.seed if args.seed is not None else parsed.seed
    path, _ = _sample_y_path(parsed, seed)
    out = Path(args.out)
    if out.is_dir():
        out = out / "ypath.csv"
    if out.suffix == ".bin":
        write_field_dump(out, path.values, DUMP_MAGIC_YPATH)
    else:
        csvio.emit_csv(csvio.surface_rows(path.values, path.k, path.h), out, csvio.SURFACE_HEADER)
    print(f"volatility path ({path.values.shape[0]} times x {path.values.shape[1]} nodes) -> {out}")
    return 0


def _run_sample_x(parsed: ParsedConfig, args) -> int:
    seed = args.seed if args.seed is not None else parsed.seed
    ypath, policy = _sample_y_path(parsed, seed)
    k = 2.0**parsed.sample.k_log2
    grid = PriceGrid(T=parsed.T, k=k)
    beta = beta_increments(policy.rng(SeedPolicy.LANE_BETA, 0), grid.n_steps, k)
    xpath = solve_x(grid, _sample_curve(parsed), parsed.scaling, ypath, beta)
    out = Path(args.out)
    if out.is_dir():
        out = out / "xpath.csv"
    csvio.emit_csv(csvio.surface_rows(xpath.values, k), out, csvio.SURFACE_HEADER)
    print(f"price surface ({xpath.values.shape[0]}^2 lattice) -> {out}")
    return 0


def _run_kernel_table(parsed: ParsedConfig, args) -> int:
    kernel = parsed.kernel()
    xs = np.linspace(0.0, parsed.sample.x_max, parsed.sample.points)
    mat = kernel_matrix(kernel, xs)
    rows = []
    for i, xi in enumerate(xs):
        for j, xj in enumerate(xs):
            rows.append((float(xi), float(xj), float(mat[i, j])))
    out = Path(args.out)
    if out.is_dir():
        out = out / "kernel.csv"
    csvio.emit_csv(rows, out, ("x", "y", "value"))
    print(f"kernel table ({len(xs)}^2 points) -> {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    try:
        parsed = parse_config(Path(args.config).read_text())
        if args.command == "convergence":
            return _run_convergence(parsed, args, getattr(args, "study", None))
        if args.command == "localization":
            return _run_convergence(parsed, args, "localization")
        if args.command == "timing":
            return _run_timing(parsed, args)
        if args.command == "sample-y":
            return _run_sample_y(parsed, args)
        if args.command == "sample-x":
            return _run_sample_x(parsed, args)
        if args.command == "kernel-table":
            return _run_kernel_table(parsed, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable command dispatch")


if __name__ == "__main__":
    sys.exit(main())
