import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid

from carleman_cip.admissible import AdmissibleParams
from carleman_cip.basis import BasisSpec, TensorBasis
from carleman_cip.errors import CIPError
from carleman_cip.functional import (
    FrozenQuadratic,
    FunctionalConfig,
    Problem,
    convexity_gap,
    eval_functional,
    frechet_apply,
    residual,
    theorem_alpha,
    value_and_gradient,
)
from carleman_cip.geometry import apply_operator, make_geometry, make_grid


@pytest.fixture(scope="module")
def static_setup():
    """A basis on the desk geometry and a static field ``u = 1 + x / 2``."""
    geo = make_geometry(((0.0,), (1.0,)), (-0.1,), 0.9, 1.3, 0.005)
    grid = make_grid(geo, 31, 41)
    basis = TensorBasis(BasisSpec(3, 6, 3), grid)
    x = grid.x_axes[0]
    static = (1.0 + 0.5 * x)[:, None] * np.ones(grid.n_t)
    return grid, basis, static


def _problem_with_offset(setup, B):
    """Problem whose lifting is ``static - w_B``, so ``w_B + F`` is static."""
    grid, basis, static = setup
    F = static - basis.synth(B)
    params = AdmissibleParams(grid, b=3.0, R=1e3, lap_f=np.full(grid.n_x[0], 1.5), F=F, check_cone=False)
    return Problem(params, basis)


def test_static_solution_has_zero_residual(static_setup):
    problem = _problem_with_offset(static_setup, np.zeros(static_setup[1].size))
    Y = residual(np.zeros(problem.size), problem)
    # differencing a linear field leaves roundoff of order eps / h^2
    assert np.abs(Y).max() < 100 * np.finfo(float).eps / problem.grid.h_t**2


def test_penalty_only_value_and_gradient(static_setup):
    basis = static_setup[1]
    B = 0.01 * np.random.default_rng(0).standard_normal(basis.size)
    problem = _problem_with_offset(static_setup, B)
    assert np.abs(residual(B, problem)).max() < 1e-10
    cfg = FunctionalConfig(lam=2.0, alpha=0.3, m=3)
    G = basis.sobolev_gram(3)
    J, g = value_and_gradient(B, problem, cfg)
    assert J == pytest.approx(0.3 * B @ G @ B, rel=1e-9)
    np.testing.assert_allclose(g, 2 * 0.3 * G @ B, rtol=1e-7, atol=1e-9 * np.abs(G @ B).max())


def test_gradient_vanishes_at_exact_root(static_setup):
    basis = static_setup[1]
    B = 0.01 * np.random.default_rng(1).standard_normal(basis.size)
    problem = _problem_with_offset(static_setup, B)
    J, g = value_and_gradient(B, problem, FunctionalConfig(lam=1.0, alpha=0.0))
    assert J < 1e-20
    assert np.abs(g).max() < 1e-8


def test_unweighted_value_against_direct_quadrature(desk1d):
    problem = desk1d.problem
    grid = desk1d.grid
    B = desk1d.B_star + 0.02 * np.random.default_rng(2).standard_normal(problem.size)
    # field route: synthesise, difference with apply_operator, integrate with scipy
    u = desk1d.basis.synth(B) + desk1d.params.F
    A = desk1d.params.lap_f / u[:, 0]
    Y = A[:, None] * apply_operator(u, grid, "dtt") - apply_operator(u, grid, "laplacian")
    ref = trapezoid(trapezoid(Y**2, grid.t, axis=1), grid.x_axes[0])
    assert eval_functional(B, problem, FunctionalConfig(0.0, 0.0)) == pytest.approx(ref, rel=1e-10)


def test_residual_of_projected_truth_decreases_with_refinement():
    from carleman_cip.datasets import build_dataset, desk_1d

    norms = {}
    for k in (8, 12):
        for n in (41, 81):
            ds = build_dataset(desk_1d(k=k, n_x=(n,), n_t=2 * n - 21))
            Y = residual(ds.B_star, ds.problem).ravel()
            norms[k, n] = np.sqrt(ds.problem.W @ Y**2)
    assert norms[8, 81] < norms[8, 41] and norms[12, 81] < norms[12, 41]
    assert norms[12, 41] < norms[8, 41] and norms[12, 81] < norms[8, 81]


def test_frechet_zero_direction(desk1d):
    assert not frechet_apply(desk1d.B_star, np.zeros(desk1d.problem.size), desk1d.problem).any()


def test_frechet_is_linear(desk1d):
    rng = np.random.default_rng(3)
    H1, H2 = rng.standard_normal((2, desk1d.problem.size))
    B = desk1d.B_star
    lhs = frechet_apply(B, 2.0 * H1 - 0.5 * H2, desk1d.problem)
    rhs = 2.0 * frechet_apply(B, H1, desk1d.problem) - 0.5 * frechet_apply(B, H2, desk1d.problem)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * np.abs(rhs).max())


@pytest.mark.parametrize("index", [0, 16, 40])
def test_frechet_taylor_along_unit_direction(desk1d, index):
    # index % n_t == 0: the direction moves w(x, 0), where Y is nonlinear
    problem = desk1d.problem
    B = desk1d.B_star
    e = np.zeros(problem.size)
    e[index] = 1.0
    d = frechet_apply(B, e, problem)
    errs = []
    for eps in (1e-2, 5e-3):
        errs.append(np.abs(residual(B + eps * e, problem) - residual(B, problem) - eps * d).max())
    # remainder is quadratic in eps
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_residual_is_affine_in_directions_away_from_t0(desk1d):
    problem = desk1d.problem
    e = np.zeros(problem.size)
    e[17] = 1.0
    assert not (problem.S0 @ e).any()
    Y0 = residual(desk1d.B_star, problem)
    lin = Y0 + 0.3 * frechet_apply(desk1d.B_star, e, problem)
    np.testing.assert_allclose(residual(desk1d.B_star + 0.3 * e, problem), lin, atol=1e-10 * np.abs(Y0).max())


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), lam=st.sampled_from([0.0, 1.0, 3.0]))
def test_directional_derivative_matches_central_difference(desk1d, seed, lam):
    problem = desk1d.problem
    rng = np.random.default_rng(seed)
    B = desk1d.B_star + 0.002 * rng.standard_normal(problem.size)
    H = rng.standard_normal(problem.size)
    H /= np.linalg.norm(H)
    cfg = FunctionalConfig(lam=lam, alpha=1e-3)
    _, g = value_and_gradient(B, problem, cfg)
    eps = 1e-5
    fd = (eval_functional(B + eps * H, problem, cfg) - eval_functional(B - eps * H, problem, cfg)) / (2 * eps)
    assert g @ H == pytest.approx(fd, rel=1e-5, abs=1e-9 * np.linalg.norm(g))


def test_variants(desk1d):
    problem = desk1d.problem
    B = desk1d.B_star * 1.1
    with_pen = FunctionalConfig(lam=1.0, alpha=0.5)
    plain = eval_functional(B, problem, FunctionalConfig(lam=1.0))
    assert eval_functional(B, problem, with_pen, "J_tilde") == pytest.approx(plain)
    assert eval_functional(B, problem, with_pen, "J_bar") == pytest.approx(plain)
    extra = 0.5 * problem.basis.sobolev_normsq(B, 3)
    assert eval_functional(B, problem, with_pen) == pytest.approx(plain + extra)
    with pytest.raises(CIPError) as exc:
        eval_functional(B, problem, with_pen, "J_hat")
    assert exc.value.code == "CONFIG_ERROR"


def test_theorem_alpha():
    assert theorem_alpha(0.5, 2.0, 1.5) == pytest.approx(np.exp(-3.0))
    cfg = FunctionalConfig(lam=2.0, c_hat=0.5).with_theorem_alpha(1.5)
    assert cfg.in_theorem_regime(1.5)
    with pytest.raises(CIPError):
        FunctionalConfig(lam=-1.0)


def test_gap_of_identical_points_is_zero(desk1d):
    rep = convexity_gap(desk1d.B_star, desk1d.B_star, desk1d.problem, FunctionalConfig(1.0, 1e-3))
    assert rep.gap == 0.0 and rep.bsq == 0.0 and rep.floor == 0.0


def test_frozen_quadratic_gap_is_exact(desk1d):
    problem = desk1d.problem
    cfg = FunctionalConfig(lam=2.0, alpha=0.0)
    Q = FrozenQuadratic(problem, cfg, desk1d.B_star)
    rng = np.random.default_rng(5)
    B1 = desk1d.B_star + 0.1 * rng.standard_normal(problem.size)
    B2 = desk1d.B_star + 0.1 * rng.standard_normal(problem.size)
    gap = Q.value(B2) - Q.value(B1) - Q.gradient(B1) @ (B2 - B1)
    KdB = Q.K @ (B2 - B1)
    exact = problem.omega(2.0) @ KdB**2
    assert gap == pytest.approx(exact, rel=1e-8)


def test_frozen_quadratic_matches_functional_at_reference(desk1d):
    problem = desk1d.problem
    cfg = FunctionalConfig(lam=1.0, alpha=1e-4)
    B = desk1d.B_star
    Q = FrozenQuadratic(problem, cfg, B)
    J, g = value_and_gradient(B, problem, cfg)
    assert Q.value(B) == pytest.approx(J, rel=1e-12)
    # the frozen model ignores the dependence of A on w, so gradients differ
    Bm = Q.minimizer()
    assert np.linalg.norm(Q.gradient(Bm)) <= 1e-6 * np.linalg.norm(Q.gradient(B)) + 1e-12
    evs = np.linalg.eigvalsh(Q.hessian)
    assert Q.largest_eigenvalue(iters=2000) == pytest.approx(evs.max(), rel=1e-4)
