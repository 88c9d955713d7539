"""Space-time geometry, Carleman weight, tensor grids and grid calculus.

Fields live on a uniform tensor grid over ``Q_T = Omega x [0, T]`` and are
plain numpy arrays of shape ``(*n_x, n_t)``: spatial axes first, time last.
Flattened vectors use C order, so the time index runs fastest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import CIPError

log = logging.getLogger(__name__)

# |lambda * psi| is clipped here so that exp(2 lambda psi) stays finite
EXP_CLAMP = 350.0
MIN_POINTS = 5
REGIONS = ("Q_T", "P_d", "Omega_T", "S_T")


@dataclass(frozen=True, eq=False)
class Geometry:
    """Axis-aligned box ``Omega``, observation point ``x0`` and weight data.

    Use :func:`make_geometry` to build a validated instance.
    """

    lo: np.ndarray
    hi: np.ndarray
    x0: np.ndarray
    eta: float
    T: float
    d_level: float

    @property
    def dim(self) -> int:
        return len(self.lo)

    @cached_property
    def M(self) -> float:
        """max over the closed box of |x - x0|^2 (attained at a corner)."""
        far = np.maximum(np.abs(self.lo - self.x0), np.abs(self.hi - self.x0))
        return float(np.sum(far**2))

    @cached_property
    def r_min(self) -> float:
        """min over the closed box of |x - x0|^2."""
        near = np.clip(self.x0, self.lo, self.hi)
        return float(np.sum((near - self.x0) ** 2))

    @property
    def N(self) -> float:
        return self.eta * self.T**2 - self.M

    def psi(self, x: np.ndarray, t: np.ndarray | float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = np.sum((x - self.x0) ** 2, axis=-1)
        return r2 - self.eta * np.asarray(t, dtype=float) ** 2

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Closed-box membership of points ``x`` (shape ``(..., dim)``)."""
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)


def make_geometry(
    box: Sequence[Sequence[float]] | Sequence[float],
    x0: Sequence[float] | float,
    eta: float,
    T: float,
    d_level: float,
) -> Geometry:
    """Validate and build a :class:`Geometry`.

    ``box`` is ``(lo, hi)`` with per-axis sequences, or a pair of floats in 1-D.
    """
    lo, hi = box
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if lo.shape != hi.shape or lo.shape != x0.shape or lo.ndim != 1:
        raise CIPError("CONFIG_ERROR", "box corners and x0 must have matching length")
    if not 1 <= len(lo) <= 3:
        raise CIPError("CONFIG_ERROR", f"dimension {len(lo)} not in 1..3")
    if np.any(hi <= lo):
        raise CIPError("CONFIG_ERROR", "degenerate box")
    if not 0.0 < eta < 1.0:
        raise CIPError("CONFIG_ERROR", f"eta={eta} outside (0, 1)")
    if T <= 0:
        raise CIPError("CONFIG_ERROR", f"T={T} must be positive")
    geo = Geometry(lo=lo, hi=hi, x0=x0, eta=float(eta), T=float(T), d_level=float(d_level))
    if np.all((x0 >= lo) & (x0 <= hi)):
        raise CIPError("X0_INSIDE", f"x0={x0.tolist()} lies in the closed box")
    if geo.N <= 0:
        raise CIPError("NONPOSITIVE_N", f"eta*T^2={eta * T**2:g} <= M={geo.M:g}")
    if not 0.0 < d_level < geo.r_min:
        raise CIPError("BAD_D", f"d_level={d_level:g} not in (0, r_min={geo.r_min:g})")
    return geo


def weight(geometry: Geometry, x, t, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(psi, phi_lambda^2)`` at points ``x`` (``(..., dim)``) and times ``t``."""
    psi = geometry.psi(x, t)
    phi_sq, _ = _exp2(psi, lam)
    return psi, phi_sq


def _exp2(psi: np.ndarray, lam: float) -> tuple[np.ndarray, bool]:
    arg = lam * np.asarray(psi)
    clamped = bool(np.any(np.abs(arg) > EXP_CLAMP))
    if clamped:
        log.warning("lambda*psi clamped to +-%g (lambda=%g)", EXP_CLAMP, lam)
        arg = np.clip(arg, -EXP_CLAMP, EXP_CLAMP)
    return np.exp(2.0 * arg), clamped


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor grid over the closed space-time cylinder."""

    geometry: Geometry
    n_x: tuple[int, ...]
    n_t: int

    @property
    def dim(self) -> int:
        return self.geometry.dim

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return tuple(self.n_x)

    @property
    def shape(self) -> tuple[int, ...]:
        return (*self.n_x, self.n_t)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h_x(self) -> np.ndarray:
        g = self.geometry
        return (g.hi - g.lo) / (np.asarray(self.n_x) - 1)

    @property
    def h_t(self) -> float:
        return self.geometry.T / (self.n_t - 1)

    @cached_property
    def x_axes(self) -> list[np.ndarray]:
        g = self.geometry
        return [np.linspace(g.lo[i], g.hi[i], self.n_x[i]) for i in range(self.dim)]

    @cached_property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.geometry.T, self.n_t)

    @cached_property
    def x_nodes(self) -> np.ndarray:
        """Spatial node coordinates, shape ``(*n_x, dim)``."""
        return np.stack(np.meshgrid(*self.x_axes, indexing="ij"), axis=-1)

    @cached_property
    def psi(self) -> np.ndarray:
        r2 = np.sum((self.x_nodes - self.geometry.x0) ** 2, axis=-1)
        return r2[..., None] - self.geometry.eta * self.t**2

    def phi_sq(self, lam: float) -> np.ndarray:
        return _exp2(self.psi, lam)[0]

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        """Spatial nodes lying on the box faces."""
        mask = np.zeros(self.spatial_shape, dtype=bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask

    def distance_to_boundary(self) -> np.ndarray:
        x = self.x_nodes
        g = self.geometry
        return np.min(np.minimum(x - g.lo, g.hi - x), axis=-1)


def make_grid(geometry: Geometry, n_x: int | Sequence[int], n_t: int) -> Grid:
    if np.isscalar(n_x):
        n_x = (int(n_x),) * geometry.dim
    n_x = tuple(int(n) for n in n_x)
    if len(n_x) != geometry.dim:
        raise CIPError("CONFIG_ERROR", "n_x length does not match dimension")
    if min(n_x) < MIN_POINTS or n_t < MIN_POINTS:
        raise CIPError("GRID_TOO_SMALL", f"need >= {MIN_POINTS} points per axis")
    return Grid(geometry=geometry, n_x=n_x, n_t=int(n_t))


def pd_mask(geometry: Geometry, grid: Grid) -> np.ndarray:
    """Nodes of ``Q_T`` where ``psi > d``; empty masks are logged."""
    mask = grid.psi > geometry.d_level
    if not mask.any():
        log.warning("DEGENERATE_PD: P_d contains no grid node")
    return mask


# ---------------------------------------------------------------------------
# one-dimensional stencils


def second_difference(n: int, h: float, even_start: bool = False) -> sparse.csr_matrix:
    """Second-derivative matrix: centered inside, one-sided 2nd order at the ends.

    With ``even_start`` the first row uses the reflection ``u_{-1} = u_1``.
    """
    if n < MIN_POINTS:
        raise CIPError("GRID_TOO_SMALL", f"{n} points < {MIN_POINTS}")
    D = sparse.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1 : i + 2] = [1.0, -2.0, 1.0]
    if even_start:
        D[0, 0:2] = [-2.0, 2.0]
    else:
        D[0, 0:4] = [2.0, -5.0, 4.0, -1.0]
    D[n - 1, n - 4 : n] = [-1.0, 4.0, -5.0, 2.0]
    return (D / h**2).tocsr()


def first_difference(n: int, h: float, even_start: bool = False) -> sparse.csr_matrix:
    """First-derivative matrix; ``even_start`` makes the t=0 row vanish."""
    if n < MIN_POINTS:
        raise CIPError("GRID_TOO_SMALL", f"{n} points < {MIN_POINTS}")
    D = sparse.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1] = -1.0
        D[i, i + 1] = 1.0
    if not even_start:
        D[0, 0:3] = [-3.0, 4.0, -1.0]
    D[n - 1, n - 3 : n] = [1.0, -4.0, 3.0]
    return (D / (2.0 * h)).tocsr()


def _axis_apply(M: sparse.spmatrix, field: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(field, axis, 0)
    out = M @ moved.reshape(moved.shape[0], -1)
    return np.moveaxis(out.reshape(moved.shape), 0, axis)


def apply_operator(field: np.ndarray, grid: Grid, which: str):
    """Apply a grid differential operator to a space-time field.

    ``which`` is one of ``laplacian``, ``dtt``, ``dt`` or ``grad`` (the latter
    returns a list with one array per spatial axis).
    """
    field = np.asarray(field, dtype=float)
    if field.shape != grid.shape:
        raise CIPError("TRACE_SHAPE_MISMATCH", f"field {field.shape} vs grid {grid.shape}")
    t_axis = grid.dim
    if which == "laplacian":
        out = np.zeros_like(field)
        for ax in range(grid.dim):
            out += _axis_apply(second_difference(grid.n_x[ax], grid.h_x[ax]), field, ax)
        return out
    if which == "dtt":
        return _axis_apply(second_difference(grid.n_t, grid.h_t, even_start=True), field, t_axis)
    if which == "dt":
        return _axis_apply(first_difference(grid.n_t, grid.h_t, even_start=True), field, t_axis)
    if which == "grad":
        return [
            _axis_apply(first_difference(grid.n_x[ax], grid.h_x[ax]), field, ax)
            for ax in range(grid.dim)
        ]
    raise CIPError("CONFIG_ERROR", f"unknown operator {which!r}")


def spatial_gradient(values: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Gradient of a purely spatial array of shape ``grid.spatial_shape``."""
    return [
        _axis_apply(first_difference(grid.n_x[ax], grid.h_x[ax]), values, ax)
        for ax in range(grid.dim)
    ]


def spatial_laplacian(values: np.ndarray, grid: Grid) -> np.ndarray:
    out = np.zeros_like(values, dtype=float)
    for ax in range(grid.dim):
        out += _axis_apply(second_difference(grid.n_x[ax], grid.h_x[ax]), values, ax)
    return out


def _kron_axis(grid: Grid, M: sparse.spmatrix, axis: int) -> sparse.csr_matrix:
    sizes = grid.shape
    out = sparse.identity(1, format="csr")
    for ax, n in enumerate(sizes):
        out = sparse.kron(out, M if ax == axis else sparse.identity(n), format="csr")
    return out


def operator_matrix(grid: Grid, which: str) -> sparse.csr_matrix:
    """Sparse matrix of :func:`apply_operator` acting on C-ordered flat fields."""
    if which == "laplacian":
        out = sparse.csr_matrix((grid.size, grid.size))
        for ax in range(grid.dim):
            out = out + _kron_axis(grid, second_difference(grid.n_x[ax], grid.h_x[ax]), ax)
        return out.tocsr()
    if which == "dtt":
        return _kron_axis(grid, second_difference(grid.n_t, grid.h_t, even_start=True), grid.dim)
    if which == "dt":
        return _kron_axis(grid, first_difference(grid.n_t, grid.h_t, even_start=True), grid.dim)
    raise CIPError("CONFIG_ERROR", f"no matrix form for {which!r}")


def gradient_matrices(grid: Grid) -> list[sparse.csr_matrix]:
    """Sparse matrices of the spatial components of ``apply_operator(., "grad")``."""
    return [_kron_axis(grid, first_difference(grid.n_x[ax], grid.h_x[ax]), ax) for ax in range(grid.dim)]


# ---------------------------------------------------------------------------
# quadrature


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _outer(factors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones(())
    for f in factors:
        out = np.multiply.outer(out, f)
    return out


def spatial_weights(grid: Grid) -> np.ndarray:
    return _outer([trapezoid_weights(grid.n_x[i], grid.h_x[i]) for i in range(grid.dim)])


def quadrature_weights(grid: Grid, region: str = "Q_T") -> np.ndarray:
    """Node weights (shape ``grid.shape``) of the composite trapezoid rule on ``region``."""
    wt = trapezoid_weights(grid.n_t, grid.h_t)
    if region == "Q_T":
        return _outer([*[trapezoid_weights(grid.n_x[i], grid.h_x[i]) for i in range(grid.dim)], wt])
    if region == "P_d":
        return quadrature_weights(grid, "Q_T") * (grid.psi > grid.geometry.d_level)
    if region == "Omega_T":
        out = np.zeros(grid.shape)
        out[..., -1] = spatial_weights(grid)
        return out
    if region == "S_T":
        out = np.zeros(grid.shape)
        for ax in range(grid.dim):
            factors = [
                np.ones(1) if i == ax else trapezoid_weights(grid.n_x[i], grid.h_x[i])
                for i in range(grid.dim)
            ]
            face_w = _outer([*factors, wt])
            for end in (0, -1):
                idx = [slice(None)] * (grid.dim + 1)
                idx[ax] = slice(0, 1) if end == 0 else slice(-1, None)
                out[tuple(idx)] += face_w
        return out
    raise CIPError("CONFIG_ERROR", f"unknown region {region!r}")


def weighted_inner(f: np.ndarray, g: np.ndarray, grid: Grid, lam: float, region: str = "Q_T") -> float:
    """Trapezoid approximation of the integral of ``f * g * phi_lambda^2`` over ``region``."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != grid.shape or g.shape != grid.shape:
        raise CIPError("TRACE_SHAPE_MISMATCH", "fields must live on the grid")
    w = quadrature_weights(grid, region) * grid.phi_sq(lam)
    return float(np.sum(w * f * g))
