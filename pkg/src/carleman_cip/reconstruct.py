"""Coefficient recovery from ``w(x, 0)``: mass/load assembly, lumped solve, cell averaging.

The recovery space is a tensor spline space on a uniform cell partition of
``Omega`` (unconstrained, so it reproduces constants).  With
``u0 = (w + F)(x, 0) = sum_i u_i phi_i`` and the product rule
``c u0 ~ sum_i c_i u_i phi_i`` the weak identity ``[c u0, v] = [Lap f, v]``
becomes ``M diag(u) c = Z`` with ``M`` the Gram matrix of the space and
``Z_j = [Lap f, phi_j]``.  Lumping replaces ``M`` by its row sums.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .basis import Factor1D, full_factor
from .errors import CIPError
from .geometry import Grid, spatial_weights

LUMP_TOL = 1e-14


@dataclass(eq=False)
class RecoverySpace:
    """Tensor splines of ``degree`` on ``n_cells`` equal cells per axis of ``Omega``."""

    grid: Grid
    n_cells: tuple[int, ...]
    degree: int = 3

    def __post_init__(self):
        self.n_cells = tuple(int(n) for n in np.broadcast_to(self.n_cells, (self.grid.dim,)))
        for n, nx in zip(self.n_cells, self.grid.n_x):
            if n < 1 or n + self.degree > nx:
                raise CIPError("CONFIG_ERROR", f"{n} recovery cells unresolved by {nx} grid nodes")

    @cached_property
    def factors(self) -> list[Factor1D]:
        g = self.grid.geometry
        return [full_factor(g.lo[i], g.hi[i], n, self.degree) for i, n in enumerate(self.n_cells)]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.k for f in self.factors)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def node_matrix(self) -> np.ndarray:
        """Values of every basis function at every spatial grid node, ``(n_nodes, size)``."""
        mats = [f(ax) for f, ax in zip(self.factors, self.grid.x_axes)]
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    @cached_property
    def weights(self) -> np.ndarray:
        return spatial_weights(self.grid).ravel()

    @cached_property
    def mass(self) -> np.ndarray:
        P = self.node_matrix
        return P.T @ (self.weights[:, None] * P)

    def load(self, values: np.ndarray) -> np.ndarray:
        """``[values, phi_j]`` for all ``j`` by grid quadrature."""
        return self.node_matrix.T @ (self.weights * np.ravel(values))

    def project(self, values: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.mass, self.load(values))

    def evaluate(self, coef: np.ndarray) -> np.ndarray:
        return (self.node_matrix @ np.ravel(coef)).reshape(self.grid.spatial_shape)

    def support_cells(self, axis: int) -> list[range]:
        """Cells (per axis) on which each 1-D basis function is nonzero."""
        n, p = self.n_cells[axis], self.degree
        return [range(max(0, i - p), min(n - 1, i) + 1) for i in range(self.factors[axis].k)]

    def cell_centers(self) -> np.ndarray:
        g = self.grid.geometry
        axes = [g.lo[i] + (np.arange(n) + 0.5) * (g.hi[i] - g.lo[i]) / n for i, n in enumerate(self.n_cells)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def default_space(grid: Grid, degree: int = 3) -> RecoverySpace:
    """About two grid intervals per recovery cell."""
    return RecoverySpace(grid, tuple(max(1, (n - 1) // 2) for n in grid.n_x), degree)


@dataclass
class AuxiliaryCoefficient:
    """``c_tilde`` with the intermediate vectors of the solve."""

    c_tilde: np.ndarray
    u_coef: np.ndarray
    diag: np.ndarray
    load: np.ndarray
    space: RecoverySpace
    lumped: bool

    def field(self) -> np.ndarray:
        return self.space.evaluate(self.c_tilde)


def assemble_and_solve(
    w0: np.ndarray, F0: np.ndarray, lap_f: np.ndarray, space: RecoverySpace, lumped: bool = True
) -> AuxiliaryCoefficient:
    """Solve ``M diag(u) c = Z`` (``lumped``: ``M`` replaced by its row sums).

    ``w0`` and ``F0`` are ``t = 0`` slices on the spatial grid.
    """
    u0 = np.asarray(w0, dtype=float) + np.asarray(F0, dtype=float)
    if u0.shape != space.grid.spatial_shape or np.shape(lap_f) != u0.shape:
        raise CIPError("TRACE_SHAPE_MISMATCH", f"t=0 slices of shape {u0.shape}, grid {space.grid.spatial_shape}")
    u = space.project(u0)
    Z = space.load(lap_f)
    if lumped:
        diag = u * space.mass.sum(axis=1)
        bad = np.flatnonzero(np.abs(diag) <= LUMP_TOL * np.abs(diag).max())
        if bad.size:
            raise CIPError("ZERO_LUMPED_ROW", f"lumped row {int(bad[0])} vanishes", node=int(bad[0]))
        c = Z / diag
    else:
        diag = u
        bad = np.flatnonzero(np.abs(u) <= LUMP_TOL * np.abs(u).max())
        if bad.size:
            raise CIPError("ZERO_LUMPED_ROW", f"coefficient {int(bad[0])} of w(x,0)+F vanishes", node=int(bad[0]))
        c = np.linalg.solve(space.mass, Z) / u
    return AuxiliaryCoefficient(c, u, diag, Z, space, lumped)


@dataclass
class PiecewiseConstantCoefficient:
    """Cell values ``c_j`` on the recovery partition, clamped to ``[1, 1 + b]``."""

    values: np.ndarray
    raw: np.ndarray
    centers: np.ndarray
    clamped: int
    space: RecoverySpace

    def on_grid(self) -> np.ndarray:
        """Cell value at every spatial grid node (nodes on a cell face go to the upper cell)."""
        g = self.space.grid.geometry
        idx = []
        for i, (ax, n) in enumerate(zip(self.space.grid.x_axes, self.space.n_cells)):
            j = np.floor((ax - g.lo[i]) / (g.hi[i] - g.lo[i]) * n).astype(int)
            idx.append(np.clip(j, 0, n - 1))
        return self.values[np.ix_(*idx)]

    def rows(self) -> list[tuple]:
        flat_c = self.centers.reshape(-1, self.centers.shape[-1])
        return [(*map(float, xc), float(v)) for xc, v in zip(flat_c, self.values.ravel())]


def cell_average(aux: AuxiliaryCoefficient, b: float) -> PiecewiseConstantCoefficient:
    """Average the ``c_tilde`` entries whose support meets the Moore neighbourhood of each cell.

    Every entry carries equal weight, so ``c_j`` is a convex combination of
    the entries involved.  Values are then clamped to ``[1, 1 + b]``.
    """
    space = aux.space
    c_t = aux.c_tilde.reshape(space.shape)
    # per axis: which 1-D functions touch each cell's neighbourhood
    touch = []
    for ax, n in enumerate(space.n_cells):
        sup = space.support_cells(ax)
        rows = []
        for j in range(n):
            near = set(range(max(0, j - 1), min(n - 1, j + 1) + 1))
            rows.append([i for i, s in enumerate(sup) if near.intersection(s)])
        touch.append(rows)
    raw = np.empty(space.n_cells)
    for cell in itertools.product(*(range(n) for n in space.n_cells)):
        sel = c_t[np.ix_(*(touch[ax][j] for ax, j in enumerate(cell)))]
        raw[cell] = sel.mean()
    vals = np.clip(raw, 1.0, 1.0 + b)
    clamped = int(np.count_nonzero(vals != raw))
    return PiecewiseConstantCoefficient(vals, raw, space.cell_centers(), clamped, space)


def core_mask(grid: Grid, layer_width: float) -> np.ndarray:
    """Spatial nodes farther than ``layer_width`` from the boundary (where ``F = 0``)."""
    return grid.distance_to_boundary() > layer_width * (1 + 1e-12)


def relative_l2(approx: np.ndarray, exact: np.ndarray, grid: Grid, mask: np.ndarray | None = None) -> float:
    w = spatial_weights(grid)
    if mask is not None:
        w = w * mask
    return float(np.sqrt(np.sum(w * (approx - exact) ** 2) / np.sum(w * exact**2)))
