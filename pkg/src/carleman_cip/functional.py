"""Residual ``Y(w)``, the Carleman-weighted functionals and their derivatives.

Everything is expressed through sparse matrices acting on the coefficient
vector ``B``: ``w_B = S B`` on the grid, its grid Laplacian ``L B`` and its
grid second time derivative ``D B``.  The residual

    Y(B) = A(w_B) (D B + F_tt) - (L B + Lap F),   A(w_B) = Lap f / (w_B + F)(x, 0)

is then a pointwise nonlinearity on top of linear maps, so the gradient of
the discrete functional is exact (no adjoint PDE solve).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy import sparse

from .admissible import AdmissibleParams, a_of
from .basis import TensorBasis
from .errors import CIPError
from .geometry import apply_operator, operator_matrix, quadrature_weights

VARIANTS = ("J_alpha", "J_tilde", "J_bar")


@dataclass(frozen=True)
class FunctionalConfig:
    """``lam``: Carleman parameter; ``alpha``: penalty weight; ``m``: penalty norm order.

    ``c_hat`` stands in for the unknown constant in ``alpha >= 2 C exp(-lam N)``.
    """

    lam: float = 0.0
    alpha: float = 0.0
    m: int = 3
    c_hat: float = 1e-4

    def __post_init__(self):
        if self.lam < 0 or self.alpha < 0:
            raise CIPError("CONFIG_ERROR", "lambda and alpha must be nonnegative")

    def in_theorem_regime(self, N: float) -> bool:
        return self.alpha >= theorem_alpha(self.c_hat, self.lam, N) * (1 - 1e-12)

    def with_theorem_alpha(self, N: float) -> "FunctionalConfig":
        return replace(self, alpha=theorem_alpha(self.c_hat, self.lam, N))


def theorem_alpha(c_hat: float, lam: float, N: float) -> float:
    return 2.0 * c_hat * np.exp(-lam * N)


class Problem:
    """Discrete inverse problem: admissible data, basis and precomputed operators."""

    def __init__(self, params: AdmissibleParams, basis: TensorBasis):
        if params.grid is not basis.grid:
            raise CIPError("CONFIG_ERROR", "params and basis must share one grid")
        self.params = params
        self.basis = basis
        self.grid = basis.grid
        S = basis.synth_matrix
        self.S = S
        self.S_tt = (operator_matrix(self.grid, "dtt") @ S).tocsr()
        self.S_lap = (operator_matrix(self.grid, "laplacian") @ S).tocsr()
        self.S0 = basis.t0_matrices[0]
        F = params.F
        self.F_tt = apply_operator(F, self.grid, "dtt").ravel()
        self.F_lap = apply_operator(F, self.grid, "laplacian").ravel()
        self.F0 = params.F0.ravel()
        self.lap_f = params.lap_f.ravel()
        self.W = quadrature_weights(self.grid, "Q_T").ravel()
        self._omega: dict[float, np.ndarray] = {}

    @property
    def n_t(self) -> int:
        return self.grid.n_t

    @property
    def size(self) -> int:
        return self.basis.size

    def omega(self, lam: float) -> np.ndarray:
        """Quadrature weights times ``phi_lambda^2`` at every node."""
        if lam not in self._omega:
            self._omega[lam] = self.W * self.grid.phi_sq(lam).ravel()
        return self._omega[lam]

    def expand(self, spatial: np.ndarray) -> np.ndarray:
        """Broadcast a spatial vector over the time axis (flattened)."""
        return np.repeat(spatial, self.n_t)

    @cached_property
    def E(self) -> sparse.csr_matrix:
        """Sparse broadcasting matrix: spatial nodes -> space-time nodes."""
        n_s = int(np.prod(self.grid.spatial_shape))
        return sparse.kron(sparse.identity(n_s), np.ones((self.n_t, 1)), format="csr")

    def u0(self, B: np.ndarray) -> np.ndarray:
        return self.S0 @ B + self.F0

    def state(self, B: np.ndarray) -> dict:
        """Intermediate quantities shared by residual, derivative and gradient."""
        B = np.ravel(np.asarray(B, dtype=float))
        if B.size != self.size:
            raise CIPError("TRACE_SHAPE_MISMATCH", f"B has {B.size} entries, basis {self.size}")
        w_field_t0 = (self.S0 @ B).reshape(self.grid.spatial_shape)
        A = a_of(w_field_t0[..., None], self.params).ravel()
        u0 = self.u0(B)
        utt = self.S_tt @ B + self.F_tt
        Y = self.expand(A) * utt - (self.S_lap @ B + self.F_lap)
        return {"B": B, "A": A, "u0": u0, "utt": utt, "Y": Y}

    def jacobian(self, st: dict) -> sparse.csr_matrix:
        """Sparse matrix of ``H -> Y'(B) H``."""
        A_n = self.expand(st["A"])
        coef = -self.expand(st["A"] / st["u0"]) * st["utt"]
        return (sparse.diags(A_n) @ self.S_tt - self.S_lap + sparse.diags(coef) @ self.E @ self.S0).tocsr()


def residual(B: np.ndarray, problem: Problem) -> np.ndarray:
    """``Y(w_B)`` on the grid (shape ``grid.shape``)."""
    return problem.state(B)["Y"].reshape(problem.grid.shape)


def frechet_apply(B: np.ndarray, H: np.ndarray, problem: Problem) -> np.ndarray:
    """Linearised residual ``Y'(w_B) h`` for the direction ``h = w_H``.

    ``A h_tt - Lap h - A / (w + F)(x, 0) * (w + F)_tt * h(x, 0)``.
    """
    st = problem.state(B)
    H = np.ravel(H)
    h0 = problem.S0 @ H
    out = (
        problem.expand(st["A"]) * (problem.S_tt @ H)
        - problem.S_lap @ H
        - problem.expand(st["A"] / st["u0"]) * st["utt"] * problem.expand(h0)
    )
    return out.reshape(problem.grid.shape)


def eval_functional(B: np.ndarray, problem: Problem, config: FunctionalConfig, variant: str = "J_alpha") -> float:
    """Weighted least-squares misfit, plus ``alpha ||w_B||_m^2`` for ``J_alpha``."""
    if variant not in VARIANTS:
        raise CIPError("CONFIG_ERROR", f"unknown variant {variant!r}")
    st = problem.state(B)
    J = float(problem.omega(config.lam) @ st["Y"] ** 2)
    if variant == "J_alpha" and config.alpha > 0:
        J += config.alpha * problem.basis.sobolev_normsq(st["B"], config.m)
    return J


def value_and_gradient(B: np.ndarray, problem: Problem, config: FunctionalConfig) -> tuple[float, np.ndarray]:
    """``J_alpha`` and its gradient ``2 J_Y' (omega Y) + 2 alpha G_m B`` in one pass."""
    st = problem.state(B)
    wy = problem.omega(config.lam) * st["Y"]
    J = float(wy @ st["Y"])
    # transpose of the three Jacobian blocks applied to omega Y
    n_t = problem.n_t
    coef = (st["A"] / st["u0"]) * (st["utt"] * wy).reshape(-1, n_t).sum(axis=1)
    g = 2.0 * (
        problem.S_tt.T @ (problem.expand(st["A"]) * wy) - problem.S_lap.T @ wy - problem.S0.T @ coef
    )
    if config.alpha > 0:
        GB = problem.basis.sobolev_gram(config.m) @ st["B"]
        J += config.alpha * float(st["B"] @ GB)
        g += 2.0 * config.alpha * GB
    return J, g


def gradient(B: np.ndarray, problem: Problem, config: FunctionalConfig) -> np.ndarray:
    """Gradient of ``J_alpha`` with respect to the coefficient vector."""
    return value_and_gradient(B, problem, config)[1]


@dataclass
class GapReport:
    lam: float
    alpha: float
    gap: float
    floor: float
    h1pd_normsq: float
    bsq: float

    @property
    def passes_floor(self) -> bool:
        return self.gap >= self.floor

    def row(self) -> dict:
        return {
            "lambda": self.lam,
            "alpha": self.alpha,
            "gap": self.gap,
            "floor": self.floor,
            "h1pd_normsq": self.h1pd_normsq,
            "bsq": self.bsq,
            "pass": int(self.passes_floor),
        }


def convexity_gap(B1: np.ndarray, B2: np.ndarray, problem: Problem, config: FunctionalConfig) -> GapReport:
    """``J(B2) - J(B1) - (grad J(B1), B2 - B1)`` with the comparison quantities."""
    B1 = np.ravel(B1)
    B2 = np.ravel(B2)
    J1, g1 = value_and_gradient(B1, problem, config)
    J2 = eval_functional(B2, problem, config)
    dB = B2 - B1
    return GapReport(
        lam=config.lam,
        alpha=config.alpha,
        gap=J2 - J1 - float(g1 @ dB),
        floor=0.5 * config.alpha * problem.basis.sobolev_normsq(dB, config.m),
        h1pd_normsq=problem.basis.h1_pd_normsq(dB),
        bsq=float(dB @ dB),
    )


class FrozenQuadratic:
    """The functional with ``A`` frozen at a reference point: an exact quadratic.

    ``J(B) = sum omega (A_ref (S_tt B + F_tt) - S_lap B - F_lap)^2 + alpha B'G B``.
    """

    def __init__(self, problem: Problem, config: FunctionalConfig, B_ref: np.ndarray):
        self.problem = problem
        self.config = config
        st = problem.state(B_ref)
        A_n = problem.expand(st["A"])
        self.K = (sparse.diags(A_n) @ problem.S_tt - problem.S_lap).tocsr()
        self.r0 = A_n * problem.F_tt - problem.F_lap
        self.om = problem.omega(config.lam)
        self.G = problem.basis.sobolev_gram(config.m) if config.alpha > 0 else None

    def residual(self, B: np.ndarray) -> np.ndarray:
        return self.K @ np.ravel(B) + self.r0

    def value(self, B: np.ndarray) -> float:
        r = self.residual(B)
        J = float(self.om @ r**2)
        if self.G is not None:
            J += self.config.alpha * float(np.ravel(B) @ self.G @ np.ravel(B))
        return J

    def gradient(self, B: np.ndarray) -> np.ndarray:
        g = 2.0 * (self.K.T @ (self.om * self.residual(B)))
        if self.G is not None:
            g += 2.0 * self.config.alpha * (self.G @ np.ravel(B))
        return g

    def value_and_gradient(self, B: np.ndarray) -> tuple[float, np.ndarray]:
        return self.value(B), self.gradient(B)

    @cached_property
    def hessian(self) -> np.ndarray:
        H = 2.0 * (self.K.T @ sparse.diags(self.om) @ self.K).toarray()
        if self.G is not None:
            H += 2.0 * self.config.alpha * self.G
        return H

    def minimizer(self) -> np.ndarray:
        rhs = -2.0 * (self.K.T @ (self.om * self.r0))
        return np.linalg.solve(self.hessian, rhs)

    def hessian_action(self, v: np.ndarray) -> np.ndarray:
        out = 2.0 * (self.K.T @ (self.om * (self.K @ v)))
        if self.G is not None:
            out += 2.0 * self.config.alpha * (self.G @ v)
        return out

    def largest_eigenvalue(self, iters: int = 200, seed: int = 0) -> float:
        """Power-iteration estimate of the largest Hessian eigenvalue."""
        v = np.random.default_rng(seed).standard_normal(self.problem.size)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            w = self.hessian_action(v)
            new = float(np.linalg.norm(w))
            v = w / new
            if abs(new - lam) <= 1e-10 * new:
                lam = new
                break
            lam = new
        return lam
