"""Forward Cauchy problem ``c u_tt = Laplace u`` on an enlarged box, plus boundary data.

Free space is emulated by padding the observation box by at least ``T`` on
every side: signals travel at speed ``c^{-1/2} <= 1``, so nothing reflected
from the artificial outer wall can come back into ``Omega`` before ``t = T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CIPError
from .geometry import Grid


# ---------------------------------------------------------------------------
# media and initial data


@dataclass(frozen=True)
class Medium:
    """Analytic coefficient ``c(x) = base + sum_k amp_k exp(-|x - center_k|^2 / width_k^2)``.

    ``kind`` is ``constant``, ``radial_bump`` or ``two_bump``; ``b`` is the
    upper slack in ``1 <= c <= 1 + b`` and ``base`` plays the role of the
    far-field constant.
    """

    kind: str = "constant"
    base: float = 1.0
    b: float = 1.0
    bumps: tuple[tuple[float, tuple[float, ...], float], ...] = ()

    @property
    def b_bar(self) -> float:
        return self.base

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape[:-1], self.base)
        for amp, center, width in self.bumps:
            r2 = np.sum((x - np.asarray(center)) ** 2, axis=-1)
            out = out + amp * np.exp(-r2 / width**2)
        return out

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for amp, center, width in self.bumps:
            diff = x - np.asarray(center)
            r2 = np.sum(diff**2, axis=-1)
            out += (-2.0 * amp / width**2 * np.exp(-r2 / width**2))[..., None] * diff
        return out


def constant_medium(value: float = 1.0, b: float = 1.0) -> Medium:
    return Medium("constant", float(value), float(b))


def radial_bump(center, amp: float, width: float, base: float = 1.0, b: float = 1.0) -> Medium:
    center = tuple(float(c) for c in np.atleast_1d(center))
    return Medium("radial_bump", float(base), float(b), ((float(amp), center, float(width)),))


def two_bump(centers, amps, widths, base: float = 1.0, b: float = 1.0) -> Medium:
    bumps = tuple(
        (float(a), tuple(float(c) for c in np.atleast_1d(ctr)), float(w))
        for ctr, a, w in zip(centers, amps, widths)
    )
    return Medium("two_bump", float(base), float(b), bumps)


@dataclass(frozen=True)
class InitialData:
    """Gaussian initial displacement ``f = amp * exp(-|x - center|^2 / width^2)``."""

    center: tuple[float, ...]
    width: float
    amp: float = 1.0

    def f(self, x: np.ndarray) -> np.ndarray:
        r2 = np.sum((np.asarray(x) - np.asarray(self.center)) ** 2, axis=-1)
        return self.amp * np.exp(-r2 / self.width**2)

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        dim = x.shape[-1]
        s2 = self.width**2
        r2 = np.sum((x - np.asarray(self.center)) ** 2, axis=-1)
        return self.amp * (4.0 * r2 / s2**2 - 2.0 * dim / s2) * np.exp(-r2 / s2)

    def grad_laplacian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        dim = x.shape[-1]
        s2 = self.width**2
        diff = x - np.asarray(self.center)
        r2 = np.sum(diff**2, axis=-1)
        e = np.exp(-r2 / s2)
        # d/dr2 of amp*(4 r2/s2^2 - 2 dim/s2) e, times 2 diff
        g = self.amp * e * (4.0 / s2**2 - (4.0 * r2 / s2**2 - 2.0 * dim / s2) / s2)
        return (2.0 * g)[..., None] * diff


def gaussian_source(center, width: float, amp: float = 1.0) -> InitialData:
    return InitialData(tuple(float(c) for c in np.atleast_1d(center)), float(width), float(amp))


@dataclass
class MediumReport:
    c_min: float
    c_max: float
    bounds_ok: bool
    cone_margin: float
    cone_ok: bool
    exterior_constant: bool
    xi: float

    def __str__(self) -> str:
        return (
            f"c range        [{self.c_min:.6g}, {self.c_max:.6g}]  ok={self.bounds_ok}\n"
            f"cone margin    {self.cone_margin:.6g}  ok={self.cone_ok}\n"
            f"exterior const {self.exterior_constant}\n"
            f"xi = min Lap f {self.xi:.6g}"
        )


def check_medium(medium: Medium, initial: InitialData, grid: Grid, x_enlarged: np.ndarray) -> MediumReport:
    """Check the admissibility conditions of the medium and the source.

    Bounds on ``c`` and positivity of ``Laplace f`` are hard requirements; the
    cone condition and exterior constancy are reported only (a C^1 medium that
    is constant outside a convex box and monotone along rays from ``x0`` is
    necessarily constant).
    """
    g = grid.geometry
    c_all = medium(x_enlarged)
    bounds_ok = bool(c_all.min() >= 1.0 - 1e-14 and c_all.max() <= 1.0 + medium.b + 1e-14)
    xs = grid.x_nodes
    cone = np.sum(medium.gradient(xs) * (xs - g.x0), axis=-1)
    outside = ~g.contains(x_enlarged)
    exterior_constant = bool(np.allclose(c_all[outside], medium.b_bar, atol=1e-12))
    xi = float(initial.laplacian(xs).min())
    return MediumReport(
        c_min=float(c_all.min()),
        c_max=float(c_all.max()),
        bounds_ok=bounds_ok,
        cone_margin=float(cone.min()),
        cone_ok=bool(cone.min() >= 0.0),
        exterior_constant=exterior_constant,
        xi=xi,
    )


# ---------------------------------------------------------------------------
# solver


@dataclass(eq=False)
class WaveSolution:
    """Wave field on the enlarged box, sampled at the observation times ``grid.t``.

    ``offset`` is the index of the first ``Omega`` node along each axis and
    ``refine`` the ratio between observation and solver spacing.
    """

    grid: Grid
    axes: list[np.ndarray]
    u: np.ndarray
    c: np.ndarray
    offset: tuple[int, ...]
    refine: int
    substeps: int
    report: MediumReport | None = None

    @property
    def h(self) -> np.ndarray:
        return np.array([a[1] - a[0] for a in self.axes])

    def omega_slices(self) -> tuple[slice, ...]:
        return tuple(
            slice(o, o + (n - 1) * self.refine + 1, self.refine)
            for o, n in zip(self.offset, self.grid.n_x)
        )

    def restrict(self) -> np.ndarray:
        """Field on the observation grid ``Q_T``."""
        return self.u[self.omega_slices() + (slice(None),)]

    def utt(self) -> np.ndarray:
        """``u_tt = Laplace u / c`` on ``Q_T`` from the equation itself."""
        lap = np.zeros_like(self.u)
        for ax, h in enumerate(self.h):
            lap += _second_diff_axis(self.u, ax, h)
        return (lap / self.c[..., None])[self.omega_slices() + (slice(None),)]


def _second_diff_axis(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    out = np.zeros_like(u)
    core = [slice(None)] * u.ndim
    plus = [slice(None)] * u.ndim
    minus = [slice(None)] * u.ndim
    core[axis] = slice(1, -1)
    plus[axis] = slice(2, None)
    minus[axis] = slice(None, -2)
    out[tuple(core)] = (u[tuple(plus)] - 2.0 * u[tuple(core)] + u[tuple(minus)]) / h**2
    return out


def solve_wave(
    medium: Medium,
    initial: InitialData,
    grid: Grid,
    enlargement: float | None = None,
    refine: int = 1,
    substeps: int | None = None,
    cfl: float = 0.5,
    check: bool = True,
) -> WaveSolution:
    """Leapfrog solution of ``c u_tt = Laplace u``, ``u(.,0) = f``, ``u_t(.,0) = 0``.

    The solver spacing is ``grid.h_x / refine`` and each observation interval
    ``grid.h_t`` is split into ``substeps`` leapfrog steps (chosen from ``cfl``
    when omitted).  The outer wall carries homogeneous Dirichlet values.
    """
    geo = grid.geometry
    enlargement = geo.T if enlargement is None else float(enlargement)
    if enlargement < geo.T:
        raise CIPError("CONFIG_ERROR", f"enlargement {enlargement:g} < T={geo.T:g}")
    h = grid.h_x / refine
    pad = [int(np.ceil(enlargement / hi)) + 1 for hi in h]
    axes = [
        geo.lo[i] + h[i] * np.arange(-pad[i], (grid.n_x[i] - 1) * refine + pad[i] + 1)
        for i in range(geo.dim)
    ]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    c = medium(X)
    f = initial.f(X)

    report = check_medium(medium, initial, grid, X)
    if check:
        if not report.bounds_ok:
            raise CIPError("INVARIANT_FAIL", f"c outside [1, 1+b]: {report.c_min:g}..{report.c_max:g}")
        if report.xi <= 0.0:
            raise CIPError("INVARIANT_FAIL", f"min Laplace f on Omega = {report.xi:g} <= 0")
        edge = np.zeros(f.shape, dtype=bool)
        for ax in range(geo.dim):
            idx = [slice(None)] * geo.dim
            idx[ax] = 0
            edge[tuple(idx)] = True
            idx[ax] = -1
            edge[tuple(idx)] = True
        if np.abs(f[edge]).max() > 1e-10 * np.abs(f).max():
            raise CIPError("INVARIANT_FAIL", "f does not vanish at the outer wall")

    if substeps is None:
        dt_max = cfl * h.min() / np.sqrt(geo.dim)
        substeps = int(np.ceil(grid.h_t / dt_max))
    dt = grid.h_t / substeps
    if dt > h.min() / np.sqrt(geo.dim) + 1e-15:
        raise CIPError("CFL_VIOLATION", f"dt={dt:g} > h/sqrt(dim)={h.min() / np.sqrt(geo.dim):g}")

    def lap(v):
        out = np.zeros_like(v)
        for ax in range(geo.dim):
            out += _second_diff_axis(v, ax, h[ax])
        return out

    inv_c = 1.0 / c
    u = np.empty((*f.shape, grid.n_t))
    u[..., 0] = f
    prev = f.copy()
    cur = f + 0.5 * dt**2 * lap(f) * inv_c
    _zero_walls(cur)
    step = 1
    for n in range(1, grid.n_t):
        while step < n * substeps:
            nxt = 2.0 * cur - prev + dt**2 * lap(cur) * inv_c
            _zero_walls(nxt)
            prev, cur = cur, nxt
            step += 1
        u[..., n] = cur
    offset = tuple(pad)
    return WaveSolution(grid, axes, u, c, offset, refine, substeps, report)


def _zero_walls(v: np.ndarray) -> None:
    for ax in range(v.ndim):
        idx = [slice(None)] * v.ndim
        idx[ax] = 0
        v[tuple(idx)] = 0.0
        idx[ax] = -1
        v[tuple(idx)] = 0.0


# ---------------------------------------------------------------------------
# boundary data


def faces(dim: int) -> list[tuple[int, int]]:
    """Face identifiers ``(axis, side)`` with side 0 = lower, 1 = upper."""
    return [(ax, side) for ax in range(dim) for side in (0, 1)]


@dataclass
class BoundaryRecord:
    """Dirichlet and Neumann traces per face, each of shape ``(*face_nodes, n_t)``.

    Face order follows :func:`faces`.  ``s_bar`` and ``p_bar`` hold second time
    derivatives once preprocessing has run.
    """

    s: list[np.ndarray]
    p: list[np.ndarray]
    s_bar: list[np.ndarray] | None = None
    p_bar: list[np.ndarray] | None = None
    noise_level: float = 0.0
    meta: dict = field(default_factory=dict)

    def copy(self) -> "BoundaryRecord":
        dup = lambda xs: None if xs is None else [a.copy() for a in xs]  # noqa: E731
        return replace(self, s=dup(self.s), p=dup(self.p), s_bar=dup(self.s_bar), p_bar=dup(self.p_bar), meta=dict(self.meta))


def face_slice(dim: int, axis: int, side: int, n: int | None = None) -> tuple:
    idx: list = [slice(None)] * dim
    idx[axis] = 0 if side == 0 else -1 if n is None else n
    return tuple(idx)


def extract_boundary(solution: WaveSolution) -> BoundaryRecord:
    """Dirichlet trace and outward normal derivative on every face of ``Omega``.

    The normal derivative is the centered difference across the face using
    the exterior solver nodes next to it.
    """
    grid = solution.grid
    dim = grid.dim
    u = solution.u
    h = solution.h
    sl = solution.omega_slices()
    s_list, p_list = [], []
    for ax, side in faces(dim):
        face_idx = sl[ax].start if side == 0 else sl[ax].start + (grid.n_x[ax] - 1) * solution.refine
        if face_idx - 1 < 0 or face_idx + 1 >= u.shape[ax]:
            raise CIPError("NO_EXTERIOR_NODES", f"face {(ax, side)} has no exterior neighbour")
        base = list(sl) + [slice(None)]
        base[ax] = face_idx
        s_list.append(u[tuple(base)].copy())
        up = list(base)
        dn = list(base)
        up[ax] = face_idx + 1
        dn[ax] = face_idx - 1
        deriv = (u[tuple(up)] - u[tuple(dn)]) / (2.0 * h[ax])
        p_list.append(deriv if side == 1 else -deriv)
    return BoundaryRecord(s_list, p_list)


NOISE_MODES = ("iid", "smooth")


def _smooth_factor(shape: tuple, n_t: int, rng: np.random.Generator, n_modes: int) -> np.ndarray:
    """``zeta = sum_j a_j cos(j pi t / T) / (n_modes + 1)`` with ``a_j ~ U[-1, 1]`` per node."""
    a = rng.uniform(-1.0, 1.0, (*shape[:-1], n_modes + 1))
    t = np.linspace(0.0, np.pi, n_t)
    modes = np.cos(np.outer(np.arange(n_modes + 1), t))
    return a @ modes / (n_modes + 1)


def add_noise(
    record: BoundaryRecord, delta: float, seed: int = 0, mode: str = "iid", n_modes: int = 3
) -> BoundaryRecord:
    """Multiplicative noise ``s (1 + delta zeta)`` with ``|zeta| <= 1``.

    ``mode="iid"`` draws ``zeta ~ U[-1, 1]`` independently per sample.
    ``mode="smooth"`` draws a low-order cosine series in ``t`` per boundary
    node (uniform coefficients); it keeps ``s_t(x, 0) = 0`` and perturbs
    every time derivative by a relative amount of order ``delta``.
    ``delta = 0`` returns an unchanged copy; a fixed seed is reproducible.
    """
    if delta < 0:
        raise CIPError("CONFIG_ERROR", f"delta={delta} < 0")
    if mode not in NOISE_MODES:
        raise CIPError("CONFIG_ERROR", f"unknown noise mode {mode!r}")
    out = record.copy()
    out.noise_level = float(delta)
    out.meta["noise_mode"] = mode
    if delta == 0:
        return out
    rng = np.random.default_rng(seed)

    def zeta(a):
        if mode == "iid":
            return rng.uniform(-1.0, 1.0, a.shape)
        return _smooth_factor(a.shape, a.shape[-1], rng, n_modes)

    out.s = [a * (1.0 + delta * zeta(a)) for a in record.s]
    out.p = [a * (1.0 + delta * zeta(a)) for a in record.p]
    out.s_bar = out.p_bar = None
    return out


def boundary_values(field_q: np.ndarray, dim: int) -> list[np.ndarray]:
    """Traces of a ``Q_T`` field on every face (same layout as a record)."""
    return [np.asarray(field_q[face_slice(dim, ax, side) + (slice(None),)]) for ax, side in faces(dim)]


def dalembert(f, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Closed-form 1-D free-space solution for unit speed and zero initial velocity."""
    x = np.asarray(x)[:, None]
    t = np.asarray(t)[None, :]
    return 0.5 * (f(x + t) + f(x - t))
