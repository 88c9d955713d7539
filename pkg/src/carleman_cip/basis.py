"""Tensor-product B-spline Galerkin spaces with homogeneous conditions built in.

Spatial factors drop the first two and last two clamped B-splines so that
every function and its first derivative vanish on the box faces.  The time
factor merges the first two B-splines, which zeroes the derivative at t=0.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import CIPError
from .geometry import Grid, quadrature_weights


def open_uniform_knots(a: float, b: float, n_el: int, degree: int) -> np.ndarray:
    inner = np.linspace(a, b, n_el + 1)
    return np.concatenate([np.full(degree, a), inner, np.full(degree, b)])


def bspline_values(knots: np.ndarray, degree: int, x: np.ndarray, deriv: int = 0) -> np.ndarray:
    """Evaluate all B-splines (or a derivative) at ``x`` by the Cox-de Boor recursion.

    Returns an array of shape ``(len(x), len(knots) - degree - 1)``.  The right
    end of the knot vector is included in the last nonempty span.
    """
    knots = np.asarray(knots, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if deriv > degree:
        return np.zeros((len(x), len(knots) - degree - 1))

    # degree-0 indicators, right-continuous except at the last knot
    n0 = len(knots) - 1
    N = ((knots[:-1] <= x[:, None]) & (x[:, None] < knots[1:])).astype(float)
    last = np.nonzero(knots[1:] > knots[:-1])[0][-1]
    N[x == knots[-1], :] = 0.0
    N[x == knots[-1], last] = 1.0

    table = [N]
    for p in range(1, degree + 1 - deriv):
        n = n0 - p
        left = _safe_div(x[:, None] - knots[:n], knots[p : p + n] - knots[:n])
        right = _safe_div(knots[p + 1 : p + 1 + n] - x[:, None], knots[p + 1 : p + 1 + n] - knots[1 : 1 + n])
        N = left * N[:, :n] + right * N[:, 1 : n + 1]
        table.append(N)

    # raise degree through the derivative formula
    D = table[-1]
    for p in range(degree - deriv + 1, degree + 1):
        n = n0 - p
        a = _safe_div(np.ones(n), knots[p : p + n] - knots[:n])
        b = _safe_div(np.ones(n), knots[p + 1 : p + 1 + n] - knots[1 : 1 + n])
        D = p * (a * D[:, :n] - b * D[:, 1 : n + 1])
    return D


def _safe_div(num, den):
    den = np.broadcast_to(den, np.broadcast(num, den).shape)
    out = np.zeros(np.broadcast(num, den).shape)
    nz = den != 0
    np.divide(np.broadcast_to(num, out.shape), den, out=out, where=nz)
    return out


def gauss_gram(knots: np.ndarray, degree: int, C: np.ndarray, deriv: int) -> np.ndarray:
    """Exact L2 Gram matrix of ``deriv``-th derivatives of the columns of ``raw @ C``."""
    xg, wg = np.polynomial.legendre.leggauss(degree + 1)
    spans = np.unique(knots)
    pts, wts = [], []
    for a, b in zip(spans[:-1], spans[1:]):
        pts.append(0.5 * (b - a) * xg + 0.5 * (a + b))
        wts.append(0.5 * (b - a) * wg)
    pts = np.concatenate(pts)
    wts = np.concatenate(wts)
    V = bspline_values(knots, degree, pts, deriv) @ C
    return V.T @ (wts[:, None] * V)


@dataclass(frozen=True, eq=False)
class Factor1D:
    """One axis of the tensor basis: raw B-splines combined by the matrix ``C``."""

    knots: np.ndarray
    degree: int
    C: np.ndarray

    @property
    def k(self) -> int:
        return self.C.shape[1]

    def __call__(self, x, deriv: int = 0) -> np.ndarray:
        return bspline_values(self.knots, self.degree, x, deriv) @ self.C

    def gram(self, deriv: int) -> np.ndarray:
        return gauss_gram(self.knots, self.degree, self.C, deriv)


def spatial_factor(a: float, b: float, k: int, degree: int) -> Factor1D:
    n_el = k - degree + 4
    if n_el < 1:
        raise CIPError("CONFIG_ERROR", f"k={k} too small for degree {degree}")
    knots = open_uniform_knots(a, b, n_el, degree)
    n_raw = len(knots) - degree - 1
    C = np.eye(n_raw)[:, 2 : n_raw - 2]
    return Factor1D(knots, degree, C)


def temporal_factor(T: float, k: int, degree: int) -> Factor1D:
    n_el = k - degree + 1
    if n_el < 1:
        raise CIPError("CONFIG_ERROR", f"k_t={k} too small for degree {degree}")
    knots = open_uniform_knots(0.0, T, n_el, degree)
    n_raw = len(knots) - degree - 1
    C = np.eye(n_raw)[:, 1:]
    C[0, 0] = 1.0
    return Factor1D(knots, degree, C)


def full_factor(a: float, b: float, n_el: int, degree: int) -> Factor1D:
    """Unconstrained spline space on ``n_el`` equal cells (used for coefficient recovery)."""
    knots = open_uniform_knots(a, b, n_el, degree)
    return Factor1D(knots, degree, np.eye(len(knots) - degree - 1))


@dataclass(frozen=True)
class BasisSpec:
    degree: int = 3
    k: int = 6
    m: int = 3
    k_t: int | None = None

    def __post_init__(self):
        if self.degree < 3:
            raise CIPError("CONFIG_ERROR", "spline degree must be >= 3")
        if not 0 <= self.m <= self.degree:
            raise CIPError("CONFIG_ERROR", f"norm order m={self.m} must be <= degree")


@dataclass(eq=False)
class TensorBasis:
    """Space-time product basis ``phi_i(x) psi_j(t)`` sampled on a grid.

    Coefficients are flattened in C order over ``(*k_x, k_t)``, matching the
    layout of grid fields.
    """

    spec: BasisSpec
    grid: Grid
    x_factors: list[Factor1D] = field(init=False)
    t_factor: Factor1D = field(init=False)
    _grams: dict = field(init=False, default_factory=dict, repr=False)

    def __post_init__(self):
        g = self.grid.geometry
        s = self.spec
        self.x_factors = [spatial_factor(g.lo[i], g.hi[i], s.k, s.degree) for i in range(g.dim)]
        self.t_factor = temporal_factor(g.T, s.k_t or s.k, s.degree)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def factors(self) -> list[Factor1D]:
        return [*self.x_factors, self.t_factor]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.k for f in self.factors)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spatial_size(self) -> int:
        return int(np.prod(self.shape[:-1]))

    def _axis_values(self, axis: int, deriv: int) -> np.ndarray:
        nodes = self.grid.x_axes[axis] if axis < self.dim else self.grid.t
        return self.factors[axis](nodes, deriv)

    def matrix(self, derivs: tuple[int, ...] | None = None) -> sparse.csr_matrix:
        """Sparse synthesis matrix (grid nodes x coefficients) of a mixed derivative.

        ``derivs`` gives the derivative order per axis (spatial axes then time).
        """
        derivs = derivs or (0,) * (self.dim + 1)
        out = sparse.identity(1, format="csr")
        for ax, r in enumerate(derivs):
            V = self._axis_values(ax, r)
            V[np.abs(V) < 1e-300] = 0.0
            out = sparse.kron(out, sparse.csr_matrix(V), format="csr")
        return out

    @cached_property
    def synth_matrix(self) -> sparse.csr_matrix:
        return self.matrix()

    def synth(self, B: np.ndarray) -> np.ndarray:
        B = np.asarray(B, dtype=float).ravel()
        if B.size != self.size:
            raise CIPError("TRACE_SHAPE_MISMATCH", f"B has {B.size} entries, basis {self.size}")
        return (self.synth_matrix @ B).reshape(self.grid.shape)

    def derivative(self, B: np.ndarray, derivs: tuple[int, ...]) -> np.ndarray:
        return (self.matrix(derivs) @ np.ravel(B)).reshape(self.grid.shape)

    def spatial_matrix_t0(self, derivs: tuple[int, ...] | None = None) -> sparse.csr_matrix:
        """Maps coefficients to values (or spatial derivatives) of ``w(., 0)`` at spatial nodes."""
        derivs = derivs or (0,) * self.dim
        out = sparse.identity(1, format="csr")
        for ax, r in enumerate(derivs):
            out = sparse.kron(out, sparse.csr_matrix(self._axis_values(ax, r)), format="csr")
        row0 = self.t_factor(np.array([0.0]))
        return sparse.kron(out, sparse.csr_matrix(row0), format="csr")

    @cached_property
    def t0_matrices(self) -> list[sparse.csr_matrix]:
        """Value and spatial first derivatives of ``w(., 0)`` at the spatial nodes."""
        zero = (0,) * self.dim
        mats = [self.spatial_matrix_t0(zero)]
        for ax in range(self.dim):
            d = list(zero)
            d[ax] = 1
            mats.append(self.spatial_matrix_t0(tuple(d)))
        return mats

    # -- Gram matrices -------------------------------------------------------

    def sobolev_gram(self, m: int | None = None) -> np.ndarray:
        """Exact Gram matrix of the H^m(Q_T) inner product (default ``m = spec.m``)."""
        m = self.spec.m if m is None else m
        if m not in self._grams:
            self._grams[m] = self._sobolev_gram(m)
        return self._grams[m]

    def _sobolev_gram(self, m: int) -> np.ndarray:
        d = self.dim + 1
        grams = [[f.gram(r) for r in range(m + 1)] for f in self.factors]
        G = np.zeros((self.size, self.size))
        for alpha in itertools.product(range(m + 1), repeat=d):
            if sum(alpha) > m:
                continue
            term = np.ones((1, 1))
            for ax, r in enumerate(alpha):
                term = np.kron(term, grams[ax][r])
            G += term
        return G

    def sobolev_inner(self, B1: np.ndarray, B2: np.ndarray, m: int | None = None) -> float:
        return float(np.ravel(B1) @ self.sobolev_gram(m) @ np.ravel(B2))

    def sobolev_normsq(self, B: np.ndarray, m: int | None = None) -> float:
        return self.sobolev_inner(B, B, m)

    @cached_property
    def first_order_matrices(self) -> list[sparse.csr_matrix]:
        """Value, time-derivative and spatial-gradient synthesis matrices."""
        zero = (0,) * (self.dim + 1)
        mats = [self.matrix(zero)]
        for ax in range(self.dim + 1):
            d = list(zero)
            d[ax] = 1
            mats.append(self.matrix(tuple(d)))
        return mats

    def gram(self, norm: str = "L2") -> np.ndarray:
        """Discrete Gram matrix on the grid in the ``L2`` or ``H1_Pd`` inner product."""
        if norm == "L2":
            W = quadrature_weights(self.grid, "Q_T").ravel()
            S = self.synth_matrix
            return (S.T @ sparse.diags(W) @ S).toarray()
        if norm == "H1_Pd":
            W = sparse.diags(quadrature_weights(self.grid, "P_d").ravel())
            return sum((M.T @ W @ M).toarray() for M in self.discrete_h1_matrices)
        raise CIPError("CONFIG_ERROR", f"unknown norm {norm!r}")

    @cached_property
    def discrete_h1_matrices(self) -> list[sparse.csr_matrix]:
        """Grid difference operators (value, d/dt, spatial gradient) composed with synthesis.

        The discrete H1(P_d) inner product applies the same stencils to basis
        functions and to data, which keeps the projection idempotent.
        """
        from .geometry import gradient_matrices, operator_matrix

        S = self.synth_matrix
        ops = [operator_matrix(self.grid, "dt"), *gradient_matrices(self.grid)]
        return [S, *((D @ S).tocsr() for D in ops)]

    def h1_pd_normsq(self, B: np.ndarray) -> float:
        """Squared H1(P_d) norm of ``w_B`` (spline derivatives, grid quadrature)."""
        W = quadrature_weights(self.grid, "P_d").ravel()
        B = np.ravel(B)
        return float(sum(W @ (M @ B) ** 2 for M in self.first_order_matrices))


def field_h1_pd_normsq(field: np.ndarray, grid: Grid) -> float:
    """Squared H1(P_d) norm of a grid field using finite differences."""
    from .geometry import apply_operator

    W = quadrature_weights(grid, "P_d")
    total = np.sum(W * field**2)
    total += np.sum(W * apply_operator(field, grid, "dt") ** 2)
    for g in apply_operator(field, grid, "grad"):
        total += np.sum(W * g**2)
    return float(total)


def make_basis(spec: BasisSpec, grid: Grid) -> TensorBasis:
    return TensorBasis(spec, grid)


def project(field: np.ndarray, basis: TensorBasis, norm: str = "L2") -> np.ndarray:
    """Least-squares projection of a grid field onto the span of ``basis``.

    Solves ``Gram B = moments`` in the chosen discrete inner product and
    raises ``SINGULAR_GRAM`` when the Gram matrix is not positive definite.
    """
    field = np.asarray(field, dtype=float)
    G = basis.gram(norm)
    if norm == "L2":
        W = quadrature_weights(basis.grid, "Q_T").ravel()
        rhs = basis.synth_matrix.T @ (W * field.ravel())
    else:
        from .geometry import apply_operator

        W = quadrature_weights(basis.grid, "P_d").ravel()
        derived = [field, apply_operator(field, basis.grid, "dt"), *apply_operator(field, basis.grid, "grad")]
        rhs = sum(M.T @ (W * f.ravel()) for M, f in zip(basis.discrete_h1_matrices, derived))
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise CIPError("SINGULAR_GRAM", f"{norm} Gram matrix is not positive definite") from exc
    ev = np.diag(L) ** 2
    if ev.min() <= 1e-14 * ev.max():
        raise CIPError("SINGULAR_GRAM", f"{norm} Gram matrix is numerically singular")
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)
