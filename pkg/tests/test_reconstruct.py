import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carleman_cip.basis import BasisSpec
from carleman_cip.datasets import aligned_layer_width
from carleman_cip.errors import CIPError
from carleman_cip.geometry import make_geometry, make_grid
from carleman_cip.reconstruct import (
    AuxiliaryCoefficient,
    RecoverySpace,
    assemble_and_solve,
    cell_average,
    core_mask,
    default_space,
    relative_l2,
)


@pytest.fixture(scope="module")
def grid1():
    geo = make_geometry(((0.0,), (1.0,)), (-0.1,), 0.9, 1.3, 0.005)
    return make_grid(geo, 41, 5)


@pytest.fixture(scope="module")
def grid2():
    geo = make_geometry(((0.0, 0.0), (1.0, 1.0)), (-0.1, -0.1), 0.9, 1.7, 0.01)
    return make_grid(geo, (21, 17), 5)


def test_space_reproduces_constants(grid2):
    space = default_space(grid2)
    np.testing.assert_allclose(space.node_matrix.sum(axis=1), 1.0, atol=1e-13)


@pytest.mark.parametrize("lumped", [True, False])
def test_identity_medium_from_constant_data(grid2, lumped):
    space = default_space(grid2)
    u0 = np.full(grid2.spatial_shape, 2.5)
    aux = assemble_and_solve(u0 - 1.0, np.ones_like(u0), u0, space, lumped=lumped)
    np.testing.assert_allclose(aux.c_tilde, 1.0, rtol=1e-11)


def test_dense_solve_is_exact_on_the_space(grid1):
    # when u0 = Laplace f lies in the recovery space the consistent solve returns c = 1
    space = default_space(grid1)
    coef = 2.0 + np.random.default_rng(0).uniform(0, 1, space.size)
    u0 = space.evaluate(coef)
    aux = assemble_and_solve(u0, np.zeros_like(u0), u0, space, lumped=False)
    np.testing.assert_allclose(aux.c_tilde, 1.0, rtol=1e-9)


def test_lumped_close_to_dense_on_desk_data(desk1d):
    space = default_space(desk1d.grid)
    args = (desk1d.w_star[..., 0], desk1d.lifting.F[..., 0], desk1d.params.lap_f, space)
    lumped = assemble_and_solve(*args).field()
    dense = assemble_and_solve(*args, lumped=False).field()
    core = core_mask(desk1d.grid, aligned_layer_width(desk1d.geometry, BasisSpec(3, 8, 3)))
    assert relative_l2(lumped, dense, desk1d.grid, core) <= 0.02
    assert relative_l2(lumped, desk1d.c_true, desk1d.grid, core) <= 0.02


def test_zero_lumped_row(grid1):
    space = default_space(grid1)
    z = np.zeros(grid1.spatial_shape)
    for lumped in (True, False):
        with pytest.raises(CIPError) as exc:
            assemble_and_solve(z, z, np.ones_like(z), space, lumped=lumped)
        assert exc.value.code == "ZERO_LUMPED_ROW"


def test_shape_mismatch(grid1):
    space = default_space(grid1)
    with pytest.raises(CIPError) as exc:
        assemble_and_solve(np.ones(40), np.ones(40), np.ones(40), space)
    assert exc.value.code == "TRACE_SHAPE_MISMATCH"


def test_unresolved_space_refused(grid1):
    with pytest.raises(CIPError) as exc:
        RecoverySpace(grid1, (39,), 3)
    assert exc.value.code == "CONFIG_ERROR"


def _aux_with(space, c_tilde):
    z = np.zeros(space.size)
    return AuxiliaryCoefficient(np.asarray(c_tilde, dtype=float).ravel(), z, z, z, space, True)


def test_cell_average_of_constant(grid2):
    space = default_space(grid2)
    pc = cell_average(_aux_with(space, np.full(space.size, 1.7)), b=3.0)
    np.testing.assert_allclose(pc.values, 1.7)
    assert pc.clamped == 0
    assert pc.on_grid().shape == grid2.spatial_shape


def _touching(i_cell, degree, k):
    """1-D functions ``i`` (support cells ``i - p .. i``) meeting cells ``j - 1 .. j + 1``."""
    return [i for i in range(k) if i - degree <= i_cell + 1 and i >= i_cell - 1]


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_cell_average_matches_closed_form(grid2, seed):
    space = RecoverySpace(grid2, (5, 4), 2)
    ct = np.random.default_rng(seed).uniform(1.0, 4.0, space.shape)
    pc = cell_average(_aux_with(space, ct), b=3.0)
    for j0 in range(5):
        for j1 in range(4):
            a = _touching(j0, 2, space.shape[0])
            b = _touching(j1, 2, space.shape[1])
            assert pc.raw[j0, j1] == pytest.approx(ct[np.ix_(a, b)].mean(), rel=1e-13)
    assert pc.values.min() >= 1.0 and pc.values.max() <= 4.0


def test_checkerboard_is_averaged_and_clamped(grid1):
    space = RecoverySpace(grid1, (8,), 3)
    ct = np.where(np.arange(space.size) % 2 == 0, 0.0, 6.0)
    pc = cell_average(_aux_with(space, ct), b=1.0)
    # raw averages lie strictly between the two levels, clamping pins them to [1, 2]
    assert np.all((pc.raw > 0.0) & (pc.raw < 6.0))
    assert pc.clamped == np.count_nonzero((pc.raw < 1.0) | (pc.raw > 2.0))
    np.testing.assert_array_equal(pc.values, np.clip(pc.raw, 1.0, 2.0))


def test_on_grid_assigns_faces_to_upper_cell(grid1):
    space = RecoverySpace(grid1, (4,), 3)
    pc = cell_average(_aux_with(space, np.arange(space.size) + 1.0), b=10.0)
    node = pc.on_grid()
    x = grid1.x_axes[0]
    assert node[x == 0.25][0] == pc.values[1]
    assert node[-1] == pc.values[-1]
    rows = pc.rows()
    assert [r[0] for r in rows] == pytest.approx([0.125, 0.375, 0.625, 0.875])


def test_relative_l2(grid1):
    a = np.linspace(1.0, 2.0, 41)
    assert relative_l2(a, a, grid1) == 0.0
    assert relative_l2(1.1 * a, a, grid1) == pytest.approx(0.1)


def test_core_mask(grid1):
    m = core_mask(grid1, 0.25)
    x = grid1.x_axes[0]
    np.testing.assert_array_equal(m, (x > 0.25 + 1e-9) & (x < 0.75 - 1e-9))
