import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carleman_cip.errors import CIPError
from carleman_cip.forward import boundary_values, faces
from carleman_cip.geometry import apply_operator, make_geometry, make_grid
from carleman_cip.preprocess import build_lifting, hermite_profiles, mollify, second_time_derivative


def _cos_grid(n, T=3.0):
    t = np.linspace(0.0, T, n)
    return t, t[1] - t[0]


@settings(max_examples=30, deadline=None)
@given(n=st.integers(7, 200), scale=st.floats(0.1, 10.0), nodes=st.integers(1, 4))
def test_quadratic_traces_are_differenced_exactly(n, scale, nodes):
    t, h = _cos_grid(n)
    s = scale * np.tile(t**2, (nodes, 1))
    np.testing.assert_allclose(second_time_derivative(s, h), 2.0 * scale, rtol=1e-8)


def test_cosine_second_order():
    errs = []
    for n in (61, 121, 241):
        t, h = _cos_grid(n)
        errs.append(np.abs(second_time_derivative(np.cos(t)[None], h) + np.cos(t)).max())
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((rates > 1.8) & (rates < 2.2))


@pytest.mark.parametrize("n", [61, 121, 241])
def test_mollification_tames_noise(n):
    t, h = _cos_grid(n)
    s = np.cos(t)[None]
    noisy = s * (1.0 + 0.01 * np.random.default_rng(0).uniform(-1, 1, s.shape))
    exact = -np.cos(t)
    err = lambda a: np.abs(a - exact).max()  # noqa: E731
    clean_moll = err(second_time_derivative(s, h, delta_hint=0.01))
    noisy_moll = err(second_time_derivative(noisy, h, delta_hint=0.01))
    clean_raw = err(second_time_derivative(s, h))
    noisy_raw = err(second_time_derivative(noisy, h))
    assert noisy_moll <= 5.0 * clean_moll
    assert noisy_raw >= 50.0 * clean_raw


def test_mollified_quadratic_keeps_its_curvature():
    # smoothing shifts a quadratic by a constant only, so s_bar stays exact
    t, h = _cos_grid(101)
    q = 1.0 + 0.5 * t**2
    m = mollify(q[None], h, 0.3)[0]
    np.testing.assert_allclose(m - q, (m - q)[0], atol=1e-12)
    np.testing.assert_allclose(second_time_derivative(q[None], h, delta_hint=0.01), 1.0, rtol=1e-9)


def test_too_few_samples():
    with pytest.raises(CIPError) as exc:
        second_time_derivative(np.zeros((1, 5)), 0.1)
    assert exc.value.code == "TOO_FEW_SAMPLES"


def test_hermite_profiles_end_conditions():
    H = hermite_profiles(0.2)
    H0, H1 = H(np.array([0.0, 0.2, 0.5]))
    dH0, dH1 = H(np.array([0.0, 0.2]), 1)
    np.testing.assert_allclose(H0, [1.0, 0.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(H1, [0.0, 0.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(dH0, [0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(dH1, [1.0, 0.0], atol=1e-12)


@pytest.fixture
def grid1():
    geo = make_geometry(((0.0,), (1.0,)), (-0.1,), 0.9, 1.3, 0.005)
    return make_grid(geo, 41, 21)


def test_zero_traces_zero_lifting(grid1):
    z = [np.zeros(grid1.n_t), np.zeros(grid1.n_t)]
    L = build_lifting(z, z, grid1, 0.2)
    assert not L.F.any()


def test_unit_dirichlet_profile(grid1):
    ones = [np.ones(grid1.n_t)] * 2
    zeros = [np.zeros(grid1.n_t)] * 2
    L = build_lifting(ones, zeros, grid1, 0.2)
    x = grid1.x_axes[0]
    H0, _ = hermite_profiles(0.2)(np.minimum(x, 1.0 - x))
    np.testing.assert_allclose(L.F, H0[:, None] * np.ones(grid1.n_t), atol=1e-14)
    np.testing.assert_allclose(L.F[[0, -1]], 1.0)
    assert not L.F[(x > 0.2) & (x < 0.8)].any()
    assert L.neumann_residual < 1e-12


def test_layer_too_wide(grid1):
    z = [np.zeros(grid1.n_t)] * 2
    with pytest.raises(CIPError) as exc:
        build_lifting(z, z, grid1, 0.3)
    assert exc.value.code == "LAYER_TOO_WIDE"


def test_shape_mismatch(grid1):
    z = [np.zeros(grid1.n_t + 1)] * 2
    with pytest.raises(CIPError) as exc:
        build_lifting(z, z, grid1, 0.2)
    assert exc.value.code == "TRACE_SHAPE_MISMATCH"


def _smooth_traces(grid, a, b, c):
    """Exact traces and outward normal derivatives of ``g = sin(a x + 1) cos(b y + c) cos(t)``."""
    X = grid.x_nodes
    t = grid.t
    x, y = X[..., 0][..., None], X[..., 1][..., None]
    g = np.sin(a * x + 1.0) * np.cos(b * y + c) * np.cos(t)
    gx = a * np.cos(a * x + 1.0) * np.cos(b * y + c) * np.cos(t)
    gy = -b * np.sin(a * x + 1.0) * np.sin(b * y + c) * np.cos(t)
    s = boundary_values(g, 2)
    p = []
    for (ax, side), gx_face, gy_face in zip(faces(2), boundary_values(gx, 2), boundary_values(gy, 2)):
        d = gx_face if ax == 0 else gy_face
        p.append(d if side == 1 else -d)
    return s, p


@settings(max_examples=10, deadline=None)
@given(a=st.floats(0.5, 2.5), b=st.floats(0.5, 2.5), c=st.floats(0.0, 3.0))
def test_two_dimensional_lifting_residuals(a, b, c):
    geo = make_geometry(((0.0, 0.0), (1.0, 1.0)), (-0.1, -0.1), 0.9, 1.7, 0.01)
    res = []
    for n in (21, 41):
        grid = make_grid(geo, n, 5)
        s, p = _smooth_traces(grid, a, b, c)
        L = build_lifting(s, p, grid, 0.2)
        assert L.dirichlet_residual <= 1e-10
        res.append(L.neumann_residual)
    assert res[1] <= res[0] / 3.0 + 1e-12


def test_dataset_lifting_neumann_second_order():
    from carleman_cip.datasets import build_dataset, desk_2d

    res = [build_dataset(desk_2d(n_x=(n, n), layer_width=0.2)).lifting for n in (13, 25, 49)]
    assert max(L.dirichlet_residual for L in res) <= 1e-10
    rates = [np.log2(a.neumann_residual / b.neumann_residual) for a, b in zip(res, res[1:])]
    assert min(rates) > 1.8


def test_lifting_has_zero_time_slope_at_start(desk1d):
    dt = apply_operator(desk1d.lifting.F, desk1d.grid, "dt")
    assert not dt[..., 0].any()
