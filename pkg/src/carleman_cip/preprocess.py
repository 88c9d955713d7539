"""Second time derivatives of boundary traces and the boundary-layer lifting ``F``."""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import CIPError
from .basis import bspline_values, open_uniform_knots
from .forward import BoundaryRecord, faces
from .geometry import Grid


def mollify(trace: np.ndarray, h_t: float, bandwidth: float) -> np.ndarray:
    """Convolve along the last axis with a compact ``exp(-1/(1-r^2))`` kernel.

    The signal is extended evenly below ``t = 0`` and above ``t = T`` by
    ``3 s(T) - 3 s(T - tau) + s(T - 2 tau)``, which is exact for quadratics
    (a point reflection would flatten the second derivative near ``T``).
    """
    half = int(np.floor(bandwidth / h_t))
    if half < 1:
        return trace.copy()
    r = np.arange(-half, half + 1) * h_t / bandwidth
    inside = np.abs(r) < 1.0
    kern = np.zeros_like(r)
    kern[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    kern /= kern.sum()
    left = trace[..., half:0:-1]
    n = trace.shape[-1]
    if 2 * half >= n:
        raise CIPError("TOO_FEW_SAMPLES", f"bandwidth of {half} samples needs more than {n} samples")
    j = np.arange(1, half + 1)
    right = 3.0 * trace[..., -1:] - 3.0 * trace[..., n - 1 - j] + trace[..., n - 1 - 2 * j]
    ext = np.concatenate([left, trace, right], axis=-1)
    out = np.zeros_like(trace)
    for j, kj in enumerate(kern):
        out += kj * ext[..., j : j + n]
    return out


def second_time_derivative(
    trace: np.ndarray, h_t: float, delta_hint: float = 0.0, kappa0: float = 1.0, T: float | None = None
) -> np.ndarray:
    """Centered second differences in time with an even reflection at ``t = 0``.

    For noisy data (``delta_hint > 0``) the trace is first mollified with
    bandwidth ``kappa0 * delta_hint**(1/3)`` in units of ``T``.
    """
    trace = np.asarray(trace, dtype=float)
    n = trace.shape[-1]
    if n < 7:
        raise CIPError("TOO_FEW_SAMPLES", f"{n} time samples < 7")
    if delta_hint > 0:
        T = h_t * (n - 1) if T is None else T
        trace = mollify(trace, h_t, kappa0 * delta_hint ** (1.0 / 3.0) * T)
    out = np.empty_like(trace)
    out[..., 1:-1] = trace[..., 2:] - 2.0 * trace[..., 1:-1] + trace[..., :-2]
    out[..., 0] = 2.0 * (trace[..., 1] - trace[..., 0])
    out[..., -1] = 2.0 * trace[..., -1] - 5.0 * trace[..., -2] + 4.0 * trace[..., -3] - trace[..., -4]
    return out / h_t**2


def differentiate_record(
    record: BoundaryRecord, h_t: float, delta_hint: float | None = None, kappa0: float = 1.0
) -> BoundaryRecord:
    """Fill ``s_bar`` and ``p_bar``; ``delta_hint`` defaults to the record's noise level."""
    delta = record.noise_level if delta_hint is None else delta_hint
    out = record.copy()
    out.s_bar = [second_time_derivative(a, h_t, delta, kappa0) for a in record.s]
    out.p_bar = [second_time_derivative(a, h_t, delta, kappa0) for a in record.p]
    return out


# ---------------------------------------------------------------------------
# lifting


def hermite_profiles(layer_width: float, degree: int = 3):
    """Boundary-layer shape functions ``(H0, H1)`` of the distance ``rho`` to a face.

    Both are combinations of the first two clamped B-splines of ``degree`` on
    elements of size ``layer_width / 2``: ``H0(0) = 1, H0'(0) = 0`` and
    ``H1(0) = 0, H1'(0) = 1``, and both vanish for ``rho >= layer_width``.
    With the basis knots aligned to these elements the lifting lies in the
    full spline space, so ``w = u_tt - F`` stays as smooth as ``u_tt``.
    """
    e = 0.5 * layer_width
    n_el = degree + 3
    knots = open_uniform_knots(0.0, n_el * e, n_el, degree)
    d0 = bspline_values(knots, degree, np.zeros(1), 1)[0, :2]

    def evaluate(rho: np.ndarray, deriv: int = 0) -> tuple[np.ndarray, np.ndarray]:
        r = np.clip(np.asarray(rho, dtype=float), 0.0, n_el * e)
        N = bspline_values(knots, degree, r.ravel(), deriv)[:, :2]
        H0 = (N[:, 0] + N[:, 1]).reshape(r.shape)
        H1 = (N[:, 1] / d0[1]).reshape(r.shape)
        return H0, H1

    return evaluate


@dataclass
class LiftingField:
    """Lifting ``F`` on ``Q_T`` with its spatial gradient (exact in the normal profiles)."""

    F: np.ndarray
    grad: list[np.ndarray]
    dirichlet_residual: float
    neumann_residual: float
    layer_width: float

    @property
    def grad0(self) -> list[np.ndarray]:
        return [g[..., 0] for g in self.grad]

    def report(self) -> dict:
        return {
            "dirichlet_residual": self.dirichlet_residual,
            "neumann_residual": self.neumann_residual,
            "layer_width": self.layer_width,
        }


def _face_view(F: np.ndarray, ax: int, side: int) -> np.ndarray:
    Fm = np.moveaxis(F, ax, 0)
    return Fm[::-1] if side == 1 else Fm


def _restrict(arr: np.ndarray, axes: list[int], ax: int, idx: int) -> tuple[np.ndarray, list[int]]:
    """Fix spatial axis ``ax`` of an array whose leading axes are ``axes``."""
    k = axes.index(ax)
    return np.take(arr, idx, axis=k), [a for a in axes if a != ax]


def _corner_data(s_bar, p_bar, grid: Grid, S: tuple, sides: tuple, alpha: tuple) -> np.ndarray:
    """Inward derivative ``D^alpha u`` on the intersection of the faces ``(S, sides)``.

    Values come from the Dirichlet trace of the first face in ``S``; a first
    inward derivative along ``a`` from the Neumann trace of face ``a``; higher
    mixed derivatives from differencing that Neumann trace along the face.
    The rule depends on ``alpha`` and the point only, which is what makes
    the Dirichlet data of every face reproduce exactly.
    """
    flist = faces(grid.dim)
    A = [a for a, al in zip(S, alpha) if al]
    side_of = dict(zip(S, sides))
    if not A:
        a0 = S[0]
        arr = s_bar[flist.index((a0, side_of[a0]))]
    else:
        a0 = A[0]
        arr = -p_bar[flist.index((a0, side_of[a0]))]
    axes = [i for i in range(grid.dim) if i != a0]
    for b in A[1:]:
        sign = 1.0 if side_of[b] == 0 else -1.0
        arr = sign * np.gradient(arr, grid.h_x[b], axis=axes.index(b), edge_order=2)
    for b in S:
        if b != a0:
            arr, axes = _restrict(arr, axes, b, 0 if side_of[b] == 0 else -1)
    return arr


def build_lifting(
    s_bar: list[np.ndarray], p_bar: list[np.ndarray], grid: Grid, layer_width: float, degree: int = 3
) -> LiftingField:
    """Hermite boundary-layer lifting matching ``s_bar`` and ``p_bar`` on every face.

    With ``P_a`` the two-sided Hermite interpolant along axis ``a`` (profiles
    ``H0``, ``H1`` of the distance ``rho`` into ``Omega``) the lifting is the
    Boolean sum ``P_0 + P_1 - P_0 P_1 + ...`` written out by inclusion and
    exclusion over axis subsets.  Each product term needs ``u`` and its
    inward derivatives on an edge or corner; those are taken from the traces
    by a rule that depends only on the derivative and the point, so the
    Dirichlet traces are reproduced exactly and the Neumann traces up to the
    consistency error of differenced traces.  Derivatives of the profiles
    are analytic; only the traces themselves are differenced along faces.
    """
    geo = grid.geometry
    dim = grid.dim
    edges = geo.hi - geo.lo
    if layer_width <= 0 or layer_width > 0.25 * edges.min() * (1 + 1e-12):
        raise CIPError("LAYER_TOO_WIDE", f"layer {layer_width:g} not in (0, {0.25 * edges.min():g}]")
    flist = faces(dim)
    if len(s_bar) != len(flist) or len(p_bar) != len(flist):
        raise CIPError("TRACE_SHAPE_MISMATCH", "one trace per face expected")
    for (ax, side), sb, pb in zip(flist, s_bar, p_bar):
        expect = tuple(n for i, n in enumerate(grid.n_x) if i != ax) + (grid.n_t,)
        if np.shape(sb) != expect or np.shape(pb) != expect:
            raise CIPError("TRACE_SHAPE_MISMATCH", f"face {(ax, side)}: {np.shape(sb)} vs {expect}")

    profiles = hermite_profiles(layer_width, degree)
    # per axis and side: (H0, H1) and their x-derivatives on the grid axis
    prof = {}
    for ax in range(dim):
        x = grid.x_axes[ax]
        for side in (0, 1):
            rho = x - geo.lo[ax] if side == 0 else geo.hi[ax] - x
            sign = 1.0 if side == 0 else -1.0
            H = profiles(np.abs(rho))
            dH = tuple(sign * h for h in profiles(np.abs(rho), 1))
            prof[ax, side] = (H, dH)

    def expand(vec: np.ndarray, ax: int) -> np.ndarray:
        shape = [1] * (dim + 1)
        shape[ax] = -1
        return vec.reshape(shape)

    F = np.zeros(grid.shape)
    grad = [np.zeros(grid.shape) for _ in range(dim)]
    for r in range(1, dim + 1):
        weight = 1.0 if r % 2 else -1.0
        for S in itertools.combinations(range(dim), r):
            rest = [i for i in range(dim) if i not in S]
            for sides in itertools.product((0, 1), repeat=r):
                for alpha in itertools.product((0, 1), repeat=r):
                    D = _corner_data(s_bar, p_bar, grid, S, sides, alpha)
                    Dfull = np.expand_dims(D, S) if S else D
                    prods = [expand(prof[a, sd][0][al], a) for a, sd, al in zip(S, sides, alpha)]
                    P = functools.reduce(np.multiply, prods)
                    F += weight * Dfull * P
                    for j, a in enumerate(S):
                        dP = expand(prof[a, sides[j]][1][alpha[j]], a)
                        for k, other in enumerate(prods):
                            if k != j:
                                dP = dP * other
                        grad[a] += weight * Dfull * dP
                    for i in rest:
                        dD = np.gradient(D, grid.h_x[i], axis=rest.index(i), edge_order=2)
                        grad[i] += weight * np.expand_dims(dD, S) * P

    dres, nres = _lifting_residuals(F, grad, s_bar, p_bar, grid)
    return LiftingField(F=F, grad=grad, dirichlet_residual=dres, neumann_residual=nres, layer_width=layer_width)


def _lifting_residuals(F, grad, s_bar, p_bar, grid: Grid) -> tuple[float, float]:
    dres = nres = 0.0
    for (ax, side), sb, pb in zip(faces(grid.dim), s_bar, p_bar):
        dres = max(dres, float(np.abs(_face_view(F, ax, side)[0] - sb).max()))
        outward = (1.0 if side == 1 else -1.0) * _face_view(grad[ax], ax, side)[0]
        nres = max(nres, float(np.abs(outward - pb).max()))
    return dres, nres


def lifting_from_record(record: BoundaryRecord, grid: Grid, layer_width: float, degree: int = 3) -> LiftingField:
    if record.s_bar is None or record.p_bar is None:
        raise CIPError("CONFIG_ERROR", "record has no second derivatives; run differentiate_record")
    return build_lifting(record.s_bar, record.p_bar, grid, layer_width, degree)
