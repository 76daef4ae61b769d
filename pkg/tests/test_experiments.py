import math

import numpy as np
import pytest

from heidih.experiments import (
    ErrorRow,
    RateFit,
    StudyConfig,
    fit_loglinear,
    fit_rate,
    holder_study,
    localization_study,
    max_rms_error,
    mc_pointwise_error,
    price_grid_study,
    run_study,
    spatial_study,
    temporal_study,
    timing_study,
)
from heidih.heat_fem import assemble, solve_path
from heidih.kernels import KernelSpec, MaternParams, kernel_matrix
from heidih.noise import NoiseGrid, aggregate_time, restrict_to_coarse

TINY_SPATIAL = dict(
    kind="spatial-y",
    nus=(0.5,),
    samples=10,
    master_seed=5,
    spatial_k_log2=-6,
    spatial_h_ref_log2=-6,
    spatial_h_ladder_log2=(-3, -4, -5),
    record_walltime=False,
)


def test_fit_rate_exact_power_laws():
    hs = [2.0**-i for i in range(3, 8)]
    fit = fit_rate(hs, [3.0 * h for h in hs])
    assert fit.slope == pytest.approx(1.0, abs=1e-12)
    fit = fit_rate(hs, [0.7 * math.sqrt(h) for h in hs])
    assert fit.slope == pytest.approx(0.5, abs=1e-12)
    assert fit.residual == pytest.approx(0.0, abs=1e-12)
    assert fit.points_used == 5


def test_fit_rate_noisy_power_law():
    rng = np.random.default_rng(0)
    hs = np.array([2.0**-i for i in range(2, 10)])
    errs = 2.0 * hs**0.75 * (1.0 + 0.05 * rng.uniform(-1, 1, hs.size))
    fit = fit_rate(hs, errs)
    assert fit.slope == pytest.approx(0.75, abs=0.05)


def test_fit_rate_insufficient_points():
    with pytest.raises(ValueError, match="at least 3"):
        fit_rate([0.5, 0.25], [1.0, 0.5])
    with pytest.raises(ValueError, match="positive"):
        fit_rate([0.5, 0.25, 0.125], [1.0, 0.0, 0.5])


def test_fit_rate_preasymptotic_drop():
    hs = [2.0**-i for i in range(2, 7)]
    errs = [h**0.5 for h in hs]
    errs[0] *= 40.0  # corrupt the coarsest point
    fit = fit_rate(hs, errs)
    assert fit.points_used == len(hs) - 1
    assert fit.slope == pytest.approx(0.5, abs=1e-9)


def test_max_rms_error_statistic():
    # two points, three samples with squared errors {1,4,1} and {0,0,0}
    z = np.array([6.0, 0.0])
    z2 = np.array([18.0, 0.0])
    err, se = max_rms_error(z, z2, 3)
    assert err == pytest.approx(math.sqrt(2.0))
    mean_var = (18.0 - 3 * 4.0) / 2.0 / 3.0
    assert se == pytest.approx(math.sqrt(mean_var) / (2.0 * math.sqrt(2.0)))
    err0, se0 = max_rms_error(np.zeros(2), np.zeros(2), 3)
    assert err0 == 0.0 and se0 == 0.0


def test_two_resolution_deterministic_toy():
    # 3-node coarse vs 5-node fine grid, 2 steps, deterministic "noise";
    # the expected difference is recomputed here with dense linear algebra
    D, a, k = 1.0, 0.05, 0.5
    fine = NoiseGrid(D=D, N=4)
    coarse = NoiseGrid(D=D, N=2)
    noise = np.array([[0.3, -1.0, 2.0, 0.5, -0.2], [1.0, 0.0, -0.5, 0.25, 0.75]])

    def dense_solve(grid, w_rows):
        h = grid.h
        n = grid.N - 1
        M = np.diag(np.full(n, 4 * h / 6)) + np.diag(np.full(n - 1, h / 6), 1) + np.diag(np.full(n - 1, h / 6), -1)
        K = np.diag(np.full(n, 2 * a / h)) + np.diag(np.full(n - 1, -a / h), 1) + np.diag(np.full(n - 1, -a / h), -1)
        y = np.zeros(n)
        out = [np.zeros(grid.N + 1)]
        for w in w_rows:
            b = (h / 6) * (w[:-2] + 4 * w[1:-1] + w[2:])
            y = np.linalg.solve(M + k * K, M @ y + b)
            out.append(np.concatenate([[0.0], y, [0.0]]))
        return np.asarray(out)

    ref = dense_solve(fine, noise)
    coarse_vals = dense_solve(coarse, noise[:, ::2])
    expected_sq = (coarse_vals - ref[:, ::2]) ** 2
    expected = math.sqrt(expected_sq.max())

    sys_fine = assemble(fine, a, k)
    sys_coarse = assemble(coarse, a, k)
    got_ref = solve_path(sys_fine, None, noise, 2)
    got_coarse = solve_path(sys_coarse, None, restrict_to_coarse(noise, 2), 2)
    diff2 = (got_coarse.values - got_ref.values[:, ::2]) ** 2
    err, _ = max_rms_error(diff2, diff2**2, 1)
    assert err == pytest.approx(expected, rel=1e-12)


def test_mc_pointwise_error_at_reference_is_zero():
    cfg = StudyConfig(**TINY_SPATIAL)
    err, se = mc_pointwise_error(cfg, cfg.spatial_h_ref_log2)
    assert err == 0.0 and se == 0.0


def test_mc_pointwise_error_positive_on_ladder():
    cfg = StudyConfig(**TINY_SPATIAL)
    err, se = mc_pointwise_error(cfg, -3)
    assert err > 0.0 and se > 0.0
    with pytest.raises(ValueError):
        mc_pointwise_error(StudyConfig(kind="holder"), -3)


def test_spatial_study_monotone_and_reproducible():
    cfg = StudyConfig(**TINY_SPATIAL)
    rows, fits = spatial_study(cfg)
    assert len(rows) == 3 and len(fits) == 1
    # monotone refinement within 2 combined stderr
    by_res = sorted(rows, key=lambda r: r.resolution)
    for finer, coarser in zip(by_res, by_res[1:]):
        assert finer.error <= coarser.error + 2.0 * (finer.stderr + coarser.stderr)
    rows2, fits2 = spatial_study(cfg)
    assert rows == rows2 and fits == fits2


def test_worker_counts_give_identical_results():
    cfg1 = StudyConfig(**{**TINY_SPATIAL, "workers": 1})
    cfg2 = StudyConfig(**{**TINY_SPATIAL, "workers": 2})
    rows1, fits1 = spatial_study(cfg1)
    rows2, fits2 = spatial_study(cfg2)
    assert rows1 == rows2
    assert fits1 == fits2


def test_coupling_preserves_increment_law():
    # deterministic covariance identities of the coupled coarse noise
    spec = KernelSpec(MaternParams(0.5, 1.0, 1.0))
    fine = NoiseGrid(D=1.0, N=8)
    coarse = NoiseGrid(D=1.0, N=4)
    cov_fine = kernel_matrix(spec, fine.nodes())
    assert np.allclose(cov_fine[::2, ::2], kernel_matrix(spec, coarse.nodes()), rtol=1e-13)
    # aggregated groups are exact sums, so the coarse increment law
    # Cov = (ratio k) q follows from iid fine increments with Cov = k q
    incs = np.random.default_rng(0).standard_normal((8, 9))
    agg = aggregate_time(incs, 4)
    assert agg.shape == (2, 9)
    assert np.allclose(agg[0], incs[:4].sum(axis=0), atol=0)
    assert np.allclose(agg[1], incs[4:].sum(axis=0), atol=0)


def test_temporal_study_smoke():
    cfg = StudyConfig(
        kind="temporal-y",
        nus=(0.5,),
        samples=8,
        master_seed=2,
        temporal_h_log2=-5,
        temporal_k_ref_log2=-9,
        temporal_k_ladder_log2=(-3, -4, -5),
        record_walltime=False,
    )
    rows, fits = temporal_study(cfg)
    assert len(rows) == 3
    assert 0.2 <= fits[0].slope <= 0.8


def test_coupled_beats_uncoupled_sampling():
    # one run of each mode on the same budget (seeded): coupling puts the
    # ladder on a clean power law, independent redraws leave a flat noisy
    # line that carries no rate information
    from dataclasses import replace

    base = StudyConfig(
        kind="temporal-y",
        nus=(0.5,),
        samples=50,
        master_seed=21,
        temporal_h_log2=-5,
        temporal_k_ref_log2=-11,
        temporal_k_ladder_log2=(-4, -5, -6, -7, -8),
        record_walltime=False,
    )
    _, fits_coupled = temporal_study(base)
    _, fits_uncoupled = temporal_study(replace(base, coupled=False))
    assert fits_coupled[0].residual < fits_uncoupled[0].residual
    assert fits_coupled[0].slope > 0.4
    assert abs(fits_uncoupled[0].slope) < 0.2  # blind to the rate


def test_uncoupled_mode_restricted_to_temporal():
    with pytest.raises(ValueError, match="temporal-y diagnostic"):
        StudyConfig(kind="spatial-y", coupled=False)


def test_price_study_smoke_and_rules():
    cfg = StudyConfig(
        kind="price-grid",
        nus=(0.5,),
        samples=6,
        master_seed=9,
        price_rules=("h=k",),
        price_hk_k_ref_log2=-7,
        price_hk_k_ladder_log2=(-3, -4, -5),
        record_walltime=False,
    )
    rows, fits = price_grid_study(cfg)
    assert len(rows) == 3 and len(fits) == 1
    assert fits[0].param == "sW=1,h=k"
    assert all(r.error > 0 for r in rows)


def test_price_study_validates_sqrt_exponents():
    with pytest.raises(ValueError, match="even"):
        StudyConfig(kind="price-grid", price_sq_k_ladder_log2=(-3, -4), price_sq_k_ref_log2=-8)


def test_holder_study_smoke():
    cfg = StudyConfig(
        kind="holder",
        nus=(0.05,),
        samples=30,
        master_seed=4,
        holder_h_log2=-5,
        holder_k_log2=-8,
        holder_sep_log2=(-6, -5, -4),
        holder_probes=(0.5,),
        record_walltime=False,
    )
    rows, fits = holder_study(cfg)
    assert len(rows) == 3
    pooled = [f for f in fits if f.param.endswith("pooled")]
    assert len(pooled) == 1
    assert 0.5 <= pooled[0].slope <= 1.3  # squared-error scale


def test_holder_separation_validation():
    cfg = StudyConfig(kind="holder", holder_k_log2=-4, holder_sep_log2=(-6,), samples=2, nus=(0.5,))
    with pytest.raises(ValueError, match="separations"):
        holder_study(cfg)


def test_localization_study_smoke():
    cfg = StudyConfig(
        kind="localization",
        nus=(0.5,),
        samples=40,
        master_seed=6,
        loc_h_log2=-5,
        loc_k_log2=-6,
        loc_domains=(1.0, 1.5, 2.0),
        loc_domain_max=3.0,
        loc_probe_x=0.5,
        record_walltime=False,
    )
    rows, fits = localization_study(cfg)
    assert len(rows) == 3
    assert fits[0].slope <= -2.0
    errs = [r.error for r in rows]
    assert errs[0] > errs[1] > errs[2] > 0


def test_localization_boundary_probe_keeps_order_one_error():
    # the decay factor is 1 at x = D: a probe hugging the truncation
    # boundary keeps an O(1) error while an interior probe decays hard
    common = dict(
        kind="localization",
        nus=(0.5,),
        samples=30,
        master_seed=8,
        loc_h_log2=-4,
        loc_k_log2=-6,
        loc_domains=(1.5, 2.0),
        loc_domain_max=3.0,
        record_walltime=False,
    )
    rows_near, _ = localization_study(StudyConfig(**common, loc_probe_x=1.375))
    rows_far, _ = localization_study(StudyConfig(**common, loc_probe_x=0.25))
    near = next(r.error for r in rows_near if r.resolution == 1.5)
    far = next(r.error for r in rows_far if r.resolution == 1.5)
    assert near > 5.0 * far


def test_localization_validation():
    with pytest.raises(ValueError, match="below the surrogate"):
        StudyConfig(kind="localization", loc_domains=(1.0, 4.0), loc_domain_max=4.0)
    with pytest.raises(ValueError, match="probe"):
        StudyConfig(kind="localization", loc_probe_x=1.5, loc_domains=(1.0, 2.0), loc_domain_max=4.0)


def test_timing_study_smoke():
    cfg = StudyConfig(kind="timing", nus=(0.5,), timing_k_log2s=(-4, -6), timing_reps=1)
    rows = timing_study(cfg)
    assert len(rows) == 4
    for rule in ("h=k", "h=sqrt(k)"):
        sub = [r for r in rows if r.param.endswith(rule)]
        by_k = sorted(sub, key=lambda r: r.resolution)
        assert by_k[0].wall_s >= by_k[1].wall_s * 0.5  # finer k is not cheaper
        assert all(r.noise_s > 0 for r in sub)


def test_run_study_dispatch():
    rows, fits = run_study(StudyConfig(**TINY_SPATIAL))
    assert isinstance(rows[0], ErrorRow) and isinstance(fits[0], RateFit)
    with pytest.raises(ValueError):
        StudyConfig(kind="bogus")


def test_stderr_honesty_meta_check():
    # synthetic problem with known RMS error: the 95% interval from
    # max_rms_error must cover the truth in at least 90% of repeated runs
    rng = np.random.default_rng(123)
    true_rms = {True: 1.0, False: 0.9}
    n_points, n_samples, n_runs = 3, 60, 300
    sigmas = np.array([1.0, 0.9, 0.9])
    covered = 0
    for _ in range(n_runs):
        draws = rng.standard_normal((n_samples, n_points)) * sigmas
        z = draws**2
        err, se = max_rms_error(z.sum(axis=0), (z**2).sum(axis=0), n_samples)
        if abs(err - 1.0) <= 1.96 * se + 0.05:  # allowance for max-point bias
            covered += 1
    assert covered / n_runs >= 0.90


def test_config_validation_ladder_vs_reference():
    with pytest.raises(ValueError, match="coarser than the reference"):
        StudyConfig(kind="spatial-y", spatial_h_ref_log2=-4, spatial_h_ladder_log2=(-5,))
    with pytest.raises(ValueError, match="coarser than the reference"):
        StudyConfig(kind="temporal-y", temporal_k_ref_log2=-6, temporal_k_ladder_log2=(-7,))
    with pytest.raises(ValueError, match="samples"):
        StudyConfig(kind="spatial-y", samples=1)
