"""The operator ``A(v)``, the admissible set ``G_{m,k}`` and pointwise recovery of ``c``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import TensorBasis
from .errors import CIPError
from .geometry import Grid, spatial_gradient

EPS_MARGIN = 1e-10


@dataclass(eq=False)
class AdmissibleParams:
    """Data defining ``G``: bound ``b``, radius ``R``, ``Laplace f`` on Omega and the lifting ``F``.

    Spatial gradients of ``Laplace f`` and ``F(., 0)`` feed the cone
    condition; finite differences are used when they are not supplied.
    """

    grid: Grid
    b: float
    R: float
    lap_f: np.ndarray
    F: np.ndarray
    grad_lap_f: list[np.ndarray] | None = None
    grad_F0: list[np.ndarray] | None = None
    check_cone: bool = True

    def __post_init__(self):
        if self.lap_f.shape != self.grid.spatial_shape:
            raise CIPError("TRACE_SHAPE_MISMATCH", "lap_f must be sampled on the spatial grid")
        if self.F.shape != self.grid.shape:
            raise CIPError("TRACE_SHAPE_MISMATCH", "F must be sampled on the space-time grid")
        if self.grad_lap_f is None:
            self.grad_lap_f = spatial_gradient(self.lap_f, self.grid)
        if self.grad_F0 is None:
            self.grad_F0 = spatial_gradient(self.F0, self.grid)

    @property
    def x0(self) -> np.ndarray:
        return self.grid.geometry.x0

    @property
    def F0(self) -> np.ndarray:
        return self.F[..., 0]

    @property
    def xi(self) -> float:
        return float(self.lap_f.min())

    def lap_f_h2_norm(self) -> float:
        """Discrete H^2(Omega) norm of ``Laplace f`` (finite differences)."""
        from .geometry import spatial_weights

        w = spatial_weights(self.grid)
        g = self.lap_f
        total = np.sum(w * g**2)
        grads = spatial_gradient(g, self.grid)
        total += sum(np.sum(w * d**2) for d in grads)
        for d in grads:
            total += sum(np.sum(w * dd**2) for dd in spatial_gradient(d, self.grid))
        return float(np.sqrt(total))


def a_of(v_field: np.ndarray, params: AdmissibleParams) -> np.ndarray:
    """``A(v) = Laplace f / (v + F)(x, 0)`` on the spatial nodes."""
    denom = np.asarray(v_field)[..., 0] + params.F0
    bad = np.argwhere(~(denom > 0))
    if bad.size:
        raise CIPError(
            "NONPOSITIVE_DENOMINATOR",
            f"(v+F)(x,0) <= 0 at {len(bad)} node(s), first {tuple(bad[0])}",
            nodes=[tuple(i) for i in bad],
        )
    return params.lap_f / denom


@dataclass
class MembershipReport:
    """Per-condition flags and minimal slacks; ``interior`` needs every slack > eps."""

    norm_ok: bool
    lower_ok: bool
    upper_ok: bool
    cone_ok: bool
    norm_margin: float
    lower_margin: float
    upper_margin: float
    cone_margin: float
    eps: float = EPS_MARGIN
    cone_checked: bool = True

    @property
    def member(self) -> bool:
        return self.norm_ok and self.lower_ok and self.upper_ok and self.cone_ok

    @property
    def margins(self) -> tuple[float, ...]:
        m = (self.norm_margin, self.lower_margin, self.upper_margin)
        return m + (self.cone_margin,) if self.cone_checked else m

    @property
    def min_margin(self) -> float:
        return float(min(self.margins))

    @property
    def interior(self) -> bool:
        return self.member and self.min_margin > self.eps

    def __str__(self) -> str:
        rows = [
            ("norm |B| <= R", self.norm_ok, self.norm_margin),
            ("lower bracket", self.lower_ok, self.lower_margin),
            ("upper bracket", self.upper_ok, self.upper_margin),
            ("cone (grad A, x-x0) >= 0", self.cone_ok, self.cone_margin),
        ]
        return "\n".join(f"{name:<26s} {str(ok):<5s} margin={m: .3e}" for name, ok, m in rows)


def _t0_data(B: np.ndarray, params: AdmissibleParams, basis: TensorBasis):
    mats = basis.t0_matrices
    u0 = (mats[0] @ B).reshape(params.grid.spatial_shape) + params.F0
    grad = [(M @ B).reshape(params.grid.spatial_shape) + gF for M, gF in zip(mats[1:], params.grad_F0)]
    return u0, grad


def cone_numerator(u0: np.ndarray, grad_u0: list[np.ndarray], params: AdmissibleParams) -> np.ndarray:
    """``(x - x0) . (grad(Lap f) u0 - Lap f grad u0)``; equals ``(grad A, x - x0) u0^2``.

    Affine in the candidate, which is what makes the set convex node by node.
    """
    x = params.grid.x_nodes
    out = np.zeros(params.grid.spatial_shape)
    for ax in range(params.grid.dim):
        out += (x[..., ax] - params.x0[ax]) * (params.grad_lap_f[ax] * u0 - params.lap_f * grad_u0[ax])
    return out


def membership(B: np.ndarray, params: AdmissibleParams, basis: TensorBasis) -> MembershipReport:
    """Check ``B`` against the four conditions defining ``G_{m,k}`` on the spatial nodes.

    Bracket margins are relative to ``Laplace f``; the cone margin is the
    minimum of ``(grad A(v), x - x0)`` (negative infinity when ``v + F`` is not
    positive at t=0).
    """
    B = np.ravel(B)
    norm = float(np.linalg.norm(B))
    u0, grad = _t0_data(B, params, basis)
    rel = u0 / params.lap_f
    lower = rel - 1.0 / (1.0 + params.b)
    upper = 1.0 - rel
    if params.check_cone:
        num = cone_numerator(u0, grad, params)
        cone_ok = bool(num.min() >= 0.0)
        cone_margin = float(np.min(num / u0**2)) if np.all(u0 > 0) else -np.inf
    else:
        cone_ok, cone_margin = True, np.inf
    return MembershipReport(
        norm_ok=norm <= params.R,
        lower_ok=bool(lower.min() >= 0.0),
        upper_ok=bool(upper.min() >= 0.0),
        cone_ok=cone_ok,
        norm_margin=params.R - norm,
        lower_margin=float(lower.min()),
        upper_margin=float(upper.min()),
        cone_margin=cone_margin,
        cone_checked=params.check_cone,
    )


def convex_combination(B1: np.ndarray, B2: np.ndarray, beta: float) -> np.ndarray:
    if not 0.0 <= beta <= 1.0:
        raise CIPError("CONFIG_ERROR", f"beta={beta} outside [0, 1]")
    return beta * np.asarray(B1, dtype=float) + (1.0 - beta) * np.asarray(B2, dtype=float)


@dataclass
class PointwiseRecovery:
    c: np.ndarray
    c_raw: np.ndarray
    clamped: int


def recover_c_pointwise(w_field: np.ndarray, params: AdmissibleParams) -> PointwiseRecovery:
    """``c = Laplace f / (w + F)(x, 0)`` on Omega nodes, clamped to ``[1, 1 + b]``."""
    raw = a_of(w_field, params)
    c = np.clip(raw, 1.0, 1.0 + params.b)
    clamped = int(np.count_nonzero((raw < 1.0) | (raw > 1.0 + params.b)))
    return PointwiseRecovery(c=c, c_raw=raw, clamped=clamped)
