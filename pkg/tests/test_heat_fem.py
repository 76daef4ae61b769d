import math

import numpy as np
import pytest
import scipy.linalg

from heidih.heat_fem import YPath, assemble, eval_pointwise, load_vector, project_initial, solve_path, step
from heidih.heat_reference import spectral_semigroup
from heidih.kernels import KernelSpec, MaternParams, WeightFn
from heidih.noise import IncrementStream, NoiseGrid, build_circulant

A = 0.05


def dense_interior_matrices(grid, a):
    n = grid.N - 1
    h = grid.h
    M = np.zeros((n, n))
    K = np.zeros((n, n))
    for i in range(n):
        M[i, i] = 4 * h / 6
        K[i, i] = 2 * a / h
        if i + 1 < n:
            M[i, i + 1] = M[i + 1, i] = h / 6
            K[i, i + 1] = K[i + 1, i] = -a / h
    return M, K


def test_assemble_single_interior_node():
    grid = NoiseGrid(D=1.0, N=2)
    sys_ = assemble(grid, a=0.3, k=0.1)
    assert sys_.mass_diag == pytest.approx(1.0 / 3.0)
    assert sys_.stiff_diag == pytest.approx(4 * 0.3)
    y = np.array([1.0])
    assert sys_.mass_apply(y)[0] == pytest.approx(1.0 / 3.0)
    assert sys_.system_apply(y)[0] == pytest.approx(1.0 / 3.0 + 0.1 * 1.2)


def test_generalized_eigenvalues_bounded_below():
    # discrete eigenvalues of (K, M) dominate the continuous a pi^2 j^2 / D^2
    for D, N in [(1.0, 8), (2.0, 16)]:
        grid = NoiseGrid(D=D, N=N)
        M, K = dense_interior_matrices(grid, A)
        eigs = scipy.linalg.eigh(K, M, eigvals_only=True)
        assert eigs.min() >= A * math.pi**2 / D**2 * (1 - 1e-12)


def test_assembled_matrices_symmetric_and_factorization_residual():
    grid = NoiseGrid(D=1.0, N=16)
    sys_ = assemble(grid, a=A, k=0.01)
    M, K = dense_interior_matrices(grid, A)
    assert np.allclose(M, M.T) and np.allclose(K, K.T)
    rng = np.random.default_rng(0)
    for _ in range(5):
        b = rng.standard_normal(grid.N - 1)
        z = sys_.solve(b)
        resid = np.max(np.abs(sys_.system_apply(z) - b))
        assert resid <= 1e-12 * np.max(np.abs(b))


def test_load_vector_zero_and_indicator():
    grid = NoiseGrid(D=1.0, N=8)
    sys_ = assemble(grid, a=A, k=0.1)
    assert np.array_equal(load_vector(sys_, np.zeros(9)), np.zeros(7))
    w = np.zeros(9)
    w[4] = 1.0  # interior node
    b = load_vector(sys_, w)
    h = grid.h
    expected = np.zeros(7)
    expected[2:5] = h / 6 * np.array([1.0, 4.0, 1.0])
    assert np.allclose(b, expected, atol=1e-15)


def test_load_vector_matches_dense_mass_oracle():
    grid = NoiseGrid(D=2.0, N=10)
    sys_ = assemble(grid, a=A, k=0.1)
    h = grid.h
    n = grid.N + 1
    full = np.zeros((n, n))
    for i in range(n):
        full[i, i] = 2 * h / 3 if 0 < i < n - 1 else h / 3
        if i + 1 < n:
            full[i, i + 1] = full[i + 1, i] = h / 6
    w = np.random.default_rng(3).standard_normal(n)
    assert np.allclose(load_vector(sys_, w), (full @ w)[1:-1], atol=1e-14)


def test_load_vector_keeps_boundary_noise():
    grid = NoiseGrid(D=1.0, N=4)
    sys_ = assemble(grid, a=A, k=0.1)
    w = np.zeros(5)
    w[0] = 6.0 / grid.h
    b = load_vector(sys_, w)
    assert b[0] == pytest.approx(1.0)
    assert np.allclose(b[1:], 0.0)


def test_step_zero_and_linearity():
    grid = NoiseGrid(D=1.0, N=8)
    sys_ = assemble(grid, a=A, k=0.05)
    zero = np.zeros(7)
    assert np.array_equal(step(sys_, zero, zero), zero)
    rng = np.random.default_rng(1)
    y1, y2 = rng.standard_normal(7), rng.standard_normal(7)
    b1, b2 = rng.standard_normal(7), rng.standard_normal(7)
    lhs = step(sys_, y1 + y2, b1 + b2)
    rhs = step(sys_, y1, b1) + step(sys_, y2, b2)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_step_eigenmode_decay():
    grid = NoiseGrid(D=1.0, N=16)
    k = 0.05
    sys_ = assemble(grid, a=A, k=k)
    M, K = dense_interior_matrices(grid, A)
    eigs, vecs = scipy.linalg.eigh(K, M)
    lam_h = eigs[0]
    mode = vecs[:, 0]
    y = mode.copy()
    n = 7
    for _ in range(n):
        y = step(sys_, y, np.zeros_like(y))
    assert np.allclose(y, mode / (1 + k * lam_h) ** n, atol=1e-12 * np.max(np.abs(mode)))


def test_solve_path_zero_everything():
    grid = NoiseGrid(D=1.0, N=8)
    sys_ = assemble(grid, a=A, k=0.1)
    path = solve_path(sys_, None, None, 5)
    assert path.values.shape == (6, 9)
    assert np.all(path.values == 0.0)


def test_solve_path_boundary_rows_zero_with_noise():
    grid = NoiseGrid(D=2.0, N=16)
    sys_ = assemble(grid, a=A, k=0.01)
    spec = KernelSpec(MaternParams(0.1, 0.1, 1.0), WeightFn.polynomial(0.75, 10**-0.5))
    sampler = build_circulant(spec.stationary, grid.h, grid.N)
    stream = IncrementStream(spec, grid, sys_.k, sampler, np.random.default_rng(12))
    path = solve_path(sys_, None, stream, 50)
    assert np.all(path.values[:, 0] == 0.0)
    assert np.all(path.values[:, -1] == 0.0)
    assert np.max(np.abs(path.values)) > 0.0


def heat_max_err(N, steps, T=1.0, D=1.0):
    mode = lambda x: np.sin(np.pi * x / D)
    grid = NoiseGrid(D=D, N=N)
    sys_ = assemble(grid, a=A, k=T / steps)
    path = solve_path(sys_, mode, None, steps)
    exact = math.exp(-A * math.pi**2 * T / D**2) * np.sin(np.pi * grid.nodes() / D)
    return np.max(np.abs(path.values[-1] - exact))


def test_solve_path_deterministic_orders_quick():
    # eigenmode decay: one dyadic refinement shows backward Euler order ~1
    # in time and P1 order ~2 in space (full sweep lives in acceptance)
    err_k1 = heat_max_err(N=256, steps=8)
    err_k2 = heat_max_err(N=256, steps=16)
    rate_t = math.log2(err_k1 / err_k2)
    assert 0.9 <= rate_t <= 1.3
    err_h1 = heat_max_err(N=8, steps=4096)
    err_h2 = heat_max_err(N=16, steps=4096)
    rate_x = math.log2(err_h1 / err_h2)
    assert 1.8 <= rate_x <= 2.3


def test_spectral_reference_agrees_with_eigenmode_solution():
    # consistency of the deterministic oracle used above
    D = 1.0
    v = lambda x: np.sin(np.pi * x / D)
    got = spectral_semigroup(v, t=0.7, x=0.3, D=D, a=A)
    assert got == pytest.approx(math.exp(-A * math.pi**2 * 0.7) * math.sin(np.pi * 0.3), rel=1e-12)


def test_project_initial_accuracy():
    grid = NoiseGrid(D=1.0, N=64)
    sys_ = assemble(grid, a=A, k=0.1)
    f = lambda x: np.sin(np.pi * x)
    coeffs = project_initial(sys_, f)
    # nodal values of the L2 projection of a smooth function are O(h^2) close
    assert np.max(np.abs(coeffs - f(grid.nodes()[1:-1]))) < 1e-3


def test_unconditional_stability_zero_noise():
    grid = NoiseGrid(D=1.0, N=32)
    rng = np.random.default_rng(7)
    for k in [1e-3, 0.1, 5.0]:
        sys_ = assemble(grid, a=A, k=k)
        y = rng.standard_normal(grid.N - 1)
        prev = np.max(np.abs(y))
        for _ in range(20):
            y = step(sys_, y, np.zeros_like(y))
            cur = np.max(np.abs(y))
            assert cur <= prev * (1 + 1e-12)
            prev = cur


def test_symmetry_preservation():
    grid = NoiseGrid(D=2.0, N=16)
    sys_ = assemble(grid, a=A, k=0.05)
    rng = np.random.default_rng(5)
    y0 = lambda x: np.exp(-((x - 1.0) ** 2) * 4.0) - np.exp(-4.0)
    noise = rng.standard_normal((10, grid.N + 1))
    noise = (noise + noise[:, ::-1]) / 2.0  # symmetrize about D/2
    path = solve_path(sys_, y0, noise, 10)
    assert np.allclose(path.values, path.values[:, ::-1], atol=1e-12)


def test_mean_square_growth_from_zero_start():
    grid = NoiseGrid(D=1.0, N=16)
    sys_ = assemble(grid, a=A, k=0.05)
    spec = KernelSpec(MaternParams(0.5, 1.0, 1.0), WeightFn.constant())
    sampler = build_circulant(spec.stationary, grid.h, grid.N)
    n_samples, n_steps = 3000, 6
    acc = np.zeros((n_steps + 1, grid.N + 1))
    for s in range(n_samples):
        stream = IncrementStream(spec, grid, sys_.k, sampler, np.random.default_rng(1000 + s))
        path = solve_path(sys_, None, stream, n_steps)
        acc += path.values**2
    mean_sq = acc / n_samples
    mid = grid.N // 2
    se = mean_sq[:, mid] * math.sqrt(2.0 / n_samples)
    for i in range(n_steps):
        assert mean_sq[i + 1, mid] >= mean_sq[i, mid] - 5 * (se[i + 1] + se[i])


def test_eval_pointwise():
    values = np.array([[0.0, 1.0, 3.0, 0.0]])
    path = YPath(values=values, k=1.0, h=1.0 / 3.0, D=1.0)
    assert path.eval_pointwise(0, 1.0 / 3.0) == pytest.approx(1.0)
    assert path.eval_pointwise(0, 0.5) == pytest.approx(2.0)  # midpoint of middle cell
    assert path.eval_pointwise(0, 0.0) == 0.0
    assert path.eval_pointwise(0, 1.0) == 0.0
    arr = path.eval_pointwise(0, np.array([0.0, 1.0 / 6.0, 2.0 / 3.0]))
    assert np.allclose(arr, [0.0, 0.5, 3.0])
    with pytest.raises(ValueError):
        eval_pointwise(path, 0, -0.01)
    with pytest.raises(ValueError):
        eval_pointwise(path, 0, 1.01)
