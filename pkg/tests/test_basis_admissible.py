import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid
from scipy.interpolate import BSpline

from carleman_cip.admissible import AdmissibleParams, a_of, convex_combination, membership, recover_c_pointwise
from carleman_cip.basis import BasisSpec, TensorBasis, bspline_values, open_uniform_knots, project
from carleman_cip.errors import CIPError
from carleman_cip.geometry import make_geometry, make_grid


@pytest.fixture(scope="module")
def basis2d():
    geo = make_geometry(((0.0, 0.0), (1.0, 1.5)), (-0.2, -0.2), 0.9, 2.5, 0.01)
    return TensorBasis(BasisSpec(3, 6, 2, 5), make_grid(geo, (15, 17), 13))


def test_bspline_values_match_scipy():
    knots = open_uniform_knots(0.0, 2.0, 7, 3)
    x = np.linspace(0.0, 2.0, 97)
    n = len(knots) - 4
    for deriv in range(4):
        mine = bspline_values(knots, 3, x, deriv)
        ref = np.column_stack([BSpline(knots, np.eye(n)[i], 3, extrapolate=False)(x, nu=deriv) for i in range(n)])
        ref[-1] = [BSpline(knots, np.eye(n)[i], 3)(x[-1] - 0.0, nu=deriv) for i in range(n)]
        np.testing.assert_allclose(mine, np.nan_to_num(ref), atol=1e-11 * max(1.0, np.abs(ref).max()))


def test_zero_coefficients(basis2d):
    assert not basis2d.synth(np.zeros(basis2d.size)).any()


def test_one_hot_matches_independent_evaluation(basis2d):
    rng = np.random.default_rng(0)
    g = basis2d.grid
    axes = [*g.x_axes, g.t]
    for _ in range(5):
        idx = tuple(int(rng.integers(0, k)) for k in basis2d.shape)
        B = np.zeros(basis2d.shape)
        B[idx] = 1.0
        vals = []
        for f, a, i in zip(basis2d.factors, axes, idx):
            coef = f.C[:, i]
            vals.append(BSpline(f.knots, coef, f.degree)(a))
        ref = np.einsum("i,j,k->ijk", *vals)
        np.testing.assert_allclose(basis2d.synth(B), ref, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2**16))
def test_synthesis_is_linear(basis2d, a, b, seed):
    rng = np.random.default_rng(seed)
    B1, B2 = rng.standard_normal((2, basis2d.size))
    lhs = basis2d.synth(a * B1 + b * B2)
    rhs = a * basis2d.synth(B1) + b * basis2d.synth(B2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(rhs).max()))


def test_boundary_conditions_built_in(basis2d):
    for f, (lo, hi) in zip(basis2d.x_factors, [(0.0, 1.0), (0.0, 1.5)]):
        for deriv in (0, 1):
            np.testing.assert_allclose(f(np.array([lo, hi]), deriv), 0.0, atol=1e-12)
    np.testing.assert_allclose(basis2d.t_factor(np.array([0.0]), 1), 0.0, atol=1e-12)
    # not every function is pinned at t = 0
    assert np.abs(basis2d.t_factor(np.array([0.0]))).max() > 0.5


def test_gram_positive_definite(basis2d):
    assert np.linalg.eigvalsh(basis2d.gram("L2")).min() > 0
    assert np.linalg.eigvalsh(basis2d.sobolev_gram(2)).min() > 0


def test_sobolev_gram_against_fine_quadrature():
    geo = make_geometry(((0.0,), (1.0,)), (-0.1,), 0.9, 1.3, 0.005)
    basis = TensorBasis(BasisSpec(3, 5, 1), make_grid(geo, 9, 9))
    fx, ft = basis.x_factors[0], basis.t_factor
    x = np.linspace(0, 1, 20001)
    t = np.linspace(0, 1.3, 20001)
    quad = lambda f, z, r: trapezoid(f[:, :, None] * f[:, None, :], z, axis=0)  # noqa: E731
    G = (
        np.kron(quad(fx(x), x, 0), quad(ft(t), t, 0))
        + np.kron(quad(fx(x, 1), x, 0), quad(ft(t), t, 0))
        + np.kron(quad(fx(x), x, 0), quad(ft(t, 1), t, 0))
    )
    # the trapezoid oracle itself is only accurate to about 1e-8 here
    np.testing.assert_allclose(basis.sobolev_gram(1), G, rtol=1e-5, atol=1e-7 * np.abs(G).max())


def test_projection_is_idempotent_on_span(basis2d):
    B0 = np.random.default_rng(3).standard_normal(basis2d.size)
    np.testing.assert_allclose(project(basis2d.synth(B0), basis2d), B0, atol=1e-9)


def test_h1_pd_projection_is_idempotent():
    # distant x0 and a coarse time factor: every tensor support meets P_d
    geo = make_geometry(((0.0,), (1.0,)), (-3.0,), 0.5, 6.0, 0.01)
    basis = TensorBasis(BasisSpec(3, 4, 2), make_grid(geo, 21, 41))
    B0 = np.random.default_rng(3).standard_normal(basis.size)
    np.testing.assert_allclose(project(basis.synth(B0), basis, "H1_Pd"), B0, atol=1e-8)


def test_h1_pd_gram_singular_when_supports_miss_pd(basis2d):
    # psi < d near t = T, so late temporal functions carry no H1(P_d) mass
    with pytest.raises(CIPError) as exc:
        project(np.zeros(basis2d.grid.shape), basis2d, "H1_Pd")
    assert exc.value.code == "SINGULAR_GRAM"


def test_projection_of_orthogonal_complement_vanishes(basis2d):
    from carleman_cip.geometry import quadrature_weights

    rng = np.random.default_rng(4)
    g = rng.standard_normal(basis2d.grid.shape)
    W = quadrature_weights(basis2d.grid).ravel()
    S = basis2d.synth_matrix.toarray()
    # explicit Gram-Schmidt of g against the columns in the weighted inner product
    Q = []
    for col in S.T:
        v = col.copy()
        for q in Q:
            v -= (q @ (W * v)) * q
        Q.append(v / np.sqrt(v @ (W * v)))
    r = g.ravel().copy()
    for q in Q:
        r -= (q @ (W * r)) * q
    B = project(r.reshape(g.shape), basis2d)
    assert np.abs(B).max() < 1e-8 * np.abs(g).max()


def test_projection_error_decreases_with_k():
    geo = make_geometry(((0.0,), (1.0,)), (-0.1,), 0.9, 1.3, 0.005)
    grid = make_grid(geo, 81, 81)
    x = grid.x_nodes[..., 0][..., None]
    t = grid.t
    target = (np.sin(np.pi * x) ** 2) * np.sin(2 * np.pi * x) * np.cos(2.0 * t)
    res = []
    for k in (4, 6, 8, 10):
        basis = TensorBasis(BasisSpec(3, k, 3), grid)
        res.append(np.linalg.norm(basis.synth(project(target, basis)) - target))
    assert all(b < a for a, b in zip(res, res[1:]))


def test_singular_gram_detected():
    geo = make_geometry(((0.0,), (1.0,)), (-0.1,), 0.9, 1.3, 0.005)
    # more basis functions than grid nodes: discrete Gram cannot be definite
    basis = TensorBasis(BasisSpec(3, 12, 3), make_grid(geo, 7, 7))
    with pytest.raises(CIPError) as exc:
        project(np.zeros(basis.grid.shape), basis)
    assert exc.value.code == "SINGULAR_GRAM"


# ---------------------------------------------------------------------------
# A(v), membership, convex combinations


@pytest.fixture
def flat_params():
    geo = make_geometry(((0.0,), (1.0,)), (-0.1,), 0.9, 1.3, 0.005)
    grid = make_grid(geo, 11, 9)
    return AdmissibleParams(grid, b=3.0, R=10.0, lap_f=np.full(11, 2.0), F=np.full((11, 9), 2.0))


def test_a_of_identity_cases(flat_params):
    np.testing.assert_allclose(a_of(np.zeros(flat_params.grid.shape), flat_params), 1.0)
    v = np.zeros(flat_params.grid.shape)
    np.testing.assert_allclose(a_of(v, replace(flat_params, F=flat_params.F * 0.5 + 1.0)), 1.0)


def test_a_of_reports_offending_node(flat_params):
    v = np.zeros(flat_params.grid.shape)
    v[4, 0] = -2.0
    with pytest.raises(CIPError) as exc:
        a_of(v, flat_params)
    assert exc.value.code == "NONPOSITIVE_DENOMINATOR"
    assert exc.value.info["nodes"] == [(4,)]


def test_projected_truth_is_interior(desk1d):
    rep = membership(desk1d.B_star, desk1d.params, desk1d.basis)
    assert rep.norm_ok and rep.lower_ok and rep.upper_ok and rep.cone_ok
    assert rep.interior


def test_large_norm_rejected(desk1d):
    B = desk1d.B_star * 10 * desk1d.params.R / np.linalg.norm(desk1d.B_star)
    rep = membership(B, desk1d.params, desk1d.basis)
    assert not rep.norm_ok and not rep.member


def test_bracket_equality_is_boundary_not_interior(desk1d):
    # F(., 0) = Laplace f makes v = 0 sit on the upper face of the bracket
    F = desk1d.params.F.copy()
    F[..., 0] = desk1d.params.lap_f
    params = replace(desk1d.params, F=F, grad_F0=list(desk1d.params.grad_lap_f))
    rep = membership(np.zeros(desk1d.basis.size), params, desk1d.basis)
    assert rep.upper_margin == 0.0
    assert rep.member and not rep.interior


def test_convex_combination_endpoints():
    B1, B2 = np.arange(4.0), -np.arange(4.0)
    np.testing.assert_array_equal(convex_combination(B1, B2, 0.0), B2)
    np.testing.assert_array_equal(convex_combination(B1, B2, 1.0), B1)
    with pytest.raises(CIPError):
        convex_combination(B1, B2, 1.5)


@settings(max_examples=20, deadline=None)
@given(beta=st.floats(0.0, 1.0), seed=st.integers(0, 1000))
def test_combinations_of_members_are_members(desk1d, beta, seed):
    from carleman_cip.datasets import sample_admissible

    B1, B2 = sample_admissible(desk1d, 2, np.random.default_rng(seed), scale=1.0)
    assert membership(convex_combination(B1, B2, beta), desk1d.params, desk1d.basis).member


def test_pointwise_recovery_round_trip():
    from carleman_cip.datasets import build_dataset, desk_1d

    errs = []
    for n in (41, 81):
        ds = build_dataset(desk_1d(n_x=(n,)))
        rec = recover_c_pointwise(ds.w_star, ds.params)
        errs.append(np.abs(rec.c - ds.c_true).max())
        assert rec.clamped == 0
    assert errs[1] <= errs[0] / 3.5


def test_pointwise_recovery_bracket_endpoints(flat_params):
    w = np.zeros(flat_params.grid.shape)
    rec = recover_c_pointwise(w, flat_params)
    np.testing.assert_allclose(rec.c, 1.0)
    F = np.full(flat_params.grid.shape, 2.0 / 4.0)
    rec = recover_c_pointwise(w, replace(flat_params, F=F, grad_F0=None))
    np.testing.assert_allclose(rec.c, 4.0)
    assert rec.clamped == 0
