import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carleman_cip.errors import CIPError
from carleman_cip.forward import (
    WaveSolution,
    add_noise,
    constant_medium,
    dalembert,
    extract_boundary,
    gaussian_source,
    radial_bump,
    solve_wave,
)
from carleman_cip.geometry import make_geometry, make_grid


@pytest.fixture
def geo1():
    return make_geometry(((0.0,), (1.0,)), (-0.1,), 0.9, 1.3, 0.005)


def _synthetic_solution(grid, fn, refine=1, pad=3):
    """A WaveSolution holding ``fn(x, t)`` sampled on a padded box."""
    h = grid.h_x / refine
    g = grid.geometry
    axes = [g.lo[i] + h[i] * np.arange(-pad, (grid.n_x[i] - 1) * refine + pad + 1) for i in range(grid.dim)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    u = fn(X[..., None, :], grid.t)
    return WaveSolution(grid, axes, u, np.ones(X.shape[:-1]), (pad,) * grid.dim, refine, 1)


def test_dalembert_single_resolution(geo1):
    grid = make_grid(geo1, 401, 261)
    src = gaussian_source((0.0,), 0.2)
    sol = solve_wave(constant_medium(1.0, 1.0), src, grid, enlargement=2.0, check=False)
    exact = dalembert(lambda y: src.f(y[..., None]), grid.x_axes[0], grid.t)
    assert np.abs(sol.restrict() - exact).max() <= 5e-3


def test_zero_data_gives_zero_field(geo1):
    grid = make_grid(geo1, 21, 11)
    sol = solve_wave(constant_medium(1.0, 1.0), gaussian_source((0.5,), 0.1, amp=0.0), grid, check=False)
    assert not sol.u.any()


def test_cfl_violation(geo1):
    grid = make_grid(geo1, 41, 11)
    with pytest.raises(CIPError) as exc:
        solve_wave(constant_medium(1.0, 1.0), gaussian_source((0.5,), 0.1), grid, substeps=1, check=False)
    assert exc.value.code == "CFL_VIOLATION"


def test_enlargement_below_T_refused(geo1):
    grid = make_grid(geo1, 21, 11)
    with pytest.raises(CIPError) as exc:
        solve_wave(constant_medium(1.0, 1.0), gaussian_source((0.5,), 0.1), grid, enlargement=1.0, check=False)
    assert exc.value.code == "CONFIG_ERROR"


def test_invariant_guard_on_source(geo1):
    # a source centred inside Omega has Laplace f < 0 at its peak
    grid = make_grid(geo1, 21, 11)
    with pytest.raises(CIPError) as exc:
        solve_wave(constant_medium(1.0, 1.0), gaussian_source((0.5,), 0.1), grid)
    assert exc.value.code == "INVARIANT_FAIL"


def test_medium_bounds_guard(geo1):
    grid = make_grid(geo1, 21, 11)
    with pytest.raises(CIPError):
        solve_wave(constant_medium(0.5, 1.0), gaussian_source((-1.5,), 1.0), grid, enlargement=7.0)


def test_radial_bump_gradient_matches_differences():
    med = radial_bump((1.2, -0.3), 0.7, 0.9, 1.3, 3.0)
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 2, (20, 2))
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (med(x + e) - med(x - e)) / (2 * h)
        np.testing.assert_allclose(med.gradient(x)[:, i], fd, rtol=1e-7, atol=1e-10)


def test_source_laplacian_matches_differences():
    src = gaussian_source((-1.2, 0.4), 0.8, 1.5)
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, (15, 2))
    h = 1e-4
    lap = np.zeros(len(x))
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        lap += (src.f(x + e) - 2 * src.f(x) + src.f(x - e)) / h**2
    np.testing.assert_allclose(src.laplacian(x), lap, rtol=1e-5)
    g = np.zeros((len(x), 2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = 1e-6
        g[:, i] = (src.laplacian(x + e) - src.laplacian(x - e)) / 2e-6
    np.testing.assert_allclose(src.grad_laplacian(x), g, rtol=1e-6, atol=1e-9)


def test_constant_field_traces(geo1):
    grid = make_grid(geo1, 11, 7)
    rec = extract_boundary(_synthetic_solution(grid, lambda X, t: 3.0 + 0.0 * X[..., 0] * t))
    for s, p in zip(rec.s, rec.p):
        np.testing.assert_allclose(s, 3.0)
        np.testing.assert_allclose(p, 0.0, atol=1e-12)


def test_linear_field_has_outward_normal_signs(geo1):
    grid = make_grid(geo1, 11, 7)
    rec = extract_boundary(_synthetic_solution(grid, lambda X, t: X[..., 0] + 0.0 * t))
    np.testing.assert_allclose(rec.p[0], -1.0)
    np.testing.assert_allclose(rec.p[1], 1.0)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(0.5, 3.0), b=st.floats(0.5, 3.0), phase=st.floats(0, 3))
def test_neumann_trace_second_order(a, b, phase):
    geo = make_geometry(((0.0, 0.0), (1.0, 1.0)), (-0.1, -0.1), 0.9, 1.7, 0.01)
    fn = lambda X, t: np.sin(a * X[..., 0] + phase) * np.cos(b * X[..., 1]) * np.cos(t)  # noqa: E731
    dfdx = lambda x, y, t: a * np.cos(a * x + phase) * np.cos(b * y) * np.cos(t)  # noqa: E731
    errs = []
    for n in (21, 41):
        grid = make_grid(geo, n, 5)
        rec = extract_boundary(_synthetic_solution(grid, fn))
        y, t = np.meshgrid(grid.x_axes[1], grid.t, indexing="ij")
        exact_right = dfdx(1.0, y, t)
        errs.append(np.abs(rec.p[1] - exact_right).max())
    assert errs[1] <= errs[0] / 3.5 + 1e-13


def test_missing_exterior_nodes(geo1):
    grid = make_grid(geo1, 11, 7)
    sol = _synthetic_solution(grid, lambda X, t: X[..., 0] + 0.0 * t, pad=0)
    with pytest.raises(CIPError) as exc:
        extract_boundary(sol)
    assert exc.value.code == "NO_EXTERIOR_NODES"


@pytest.fixture(scope="module")
def record1():
    geo = make_geometry(((0.0,), (1.0,)), (-0.1,), 0.9, 1.3, 0.005)
    grid = make_grid(geo, 41, 61)
    sol = solve_wave(radial_bump((1.2,), 1.0, 0.9, 1.3, 3.0), gaussian_source((-1.5,), 1.0), grid, enlargement=7.0)
    return extract_boundary(sol)


def test_zero_noise_is_bit_exact(record1):
    out = add_noise(record1, 0.0, seed=5)
    for a, b in zip(out.s + out.p, record1.s + record1.p):
        assert np.array_equal(a, b)


@pytest.mark.parametrize("mode", ["iid", "smooth"])
def test_noise_reproducible_and_bounded(record1, mode):
    a = add_noise(record1, 0.05, seed=7, mode=mode)
    b = add_noise(record1, 0.05, seed=7, mode=mode)
    for x, y in zip(a.s + a.p, b.s + b.p):
        assert np.array_equal(x, y)
    for noisy, clean in zip(a.s + a.p, record1.s + record1.p):
        nz = clean != 0
        assert np.abs((noisy[nz] - clean[nz]) / clean[nz]).max() <= 0.05 + 1e-15


def test_smooth_noise_keeps_zero_initial_velocity(record1):
    out = add_noise(record1, 0.05, seed=1, mode="smooth")
    # cosine modes are even in t: one-sided slope at t = 0 stays O(h_t)
    for noisy, clean in zip(out.s, record1.s):
        ratio = noisy / clean
        assert np.abs(ratio[..., 1] - ratio[..., 0]).max() < 0.05 * 0.05


def test_negative_delta_refused(record1):
    with pytest.raises(CIPError):
        add_noise(record1, -0.1)
