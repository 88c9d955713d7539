"""Synthetic datasets: forward solve, boundary data, lifting and the ground truth ``w*``.

The shipped desk configurations keep every acceptance run to seconds.  The
lifting layer is tied to the spatial knot spacing of the basis (two
elements), which keeps ``w* = u_tt - F`` inside the smoothness class the
spline space resolves.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from functools import cached_property

import numpy as np

from .admissible import AdmissibleParams, membership
from .basis import BasisSpec, TensorBasis, project
from .errors import CIPError
from .forward import (
    BoundaryRecord,
    InitialData,
    Medium,
    WaveSolution,
    add_noise,
    constant_medium,
    extract_boundary,
    gaussian_source,
    radial_bump,
    solve_wave,
    two_bump,
)
from .functional import Problem
from .geometry import Geometry, Grid, make_geometry, make_grid
from .preprocess import LiftingField, differentiate_record, lifting_from_record


@dataclass(frozen=True)
class DatasetConfig:
    """Everything needed to regenerate a dataset bit for bit."""

    omega_lo: tuple[float, ...] = (0.0,)
    omega_hi: tuple[float, ...] = (1.0,)
    x0: tuple[float, ...] = (-0.1,)
    eta: float = 0.9
    T: float = 1.3
    d_level: float = 0.005
    medium: str = "radial_bump"
    base: float = 1.3
    b: float = 3.0
    bump_centers: tuple[tuple[float, ...], ...] = ((1.2,),)
    bump_amps: tuple[float, ...] = (1.0,)
    bump_widths: tuple[float, ...] = (0.9,)
    source_center: tuple[float, ...] = (-1.5,)
    source_width: float = 1.0
    source_amp: float = 1.0
    n_x: tuple[int, ...] = (41,)
    n_t: int = 61
    refine: int = 2
    enlargement: float = 7.0
    degree: int = 3
    k: int = 8
    k_t: int | None = None
    m: int = 3
    R: float = 1e3
    layer_width: float | None = None
    delta: float = 0.0
    noise_mode: str = "iid"
    kappa0: float = 1.0
    seed: int = 0

    @property
    def dim(self) -> int:
        return len(self.omega_lo)

    def to_dict(self) -> dict:
        return asdict(self)


def desk_1d(**overrides) -> DatasetConfig:
    """Shipped 1-D configuration: ``Omega = (0, 1)``, far-centred bump medium."""
    return replace(DatasetConfig(), **overrides)


def desk_2d(**overrides) -> DatasetConfig:
    """Shipped 2-D configuration on the unit square (coarser basis)."""
    cfg = DatasetConfig(
        omega_lo=(0.0, 0.0),
        omega_hi=(1.0, 1.0),
        x0=(-0.1, -0.1),
        eta=0.9,
        T=1.7,
        d_level=0.01,
        bump_centers=((1.2, 1.2),),
        bump_amps=(1.0,),
        bump_widths=(1.0,),
        source_center=(-1.2, -1.2),
        source_width=1.0,
        n_x=(25, 25),
        n_t=41,
        refine=1,
        enlargement=6.0,
        k=7,
        k_t=6,
    )
    return replace(cfg, **overrides)


def make_medium(cfg: DatasetConfig) -> Medium:
    if cfg.medium == "constant":
        return constant_medium(cfg.base, cfg.b)
    if cfg.medium == "radial_bump":
        return radial_bump(cfg.bump_centers[0], cfg.bump_amps[0], cfg.bump_widths[0], cfg.base, cfg.b)
    if cfg.medium == "two_bump":
        return two_bump(cfg.bump_centers, cfg.bump_amps, cfg.bump_widths, cfg.base, cfg.b)
    raise CIPError("CONFIG_ERROR", f"unknown medium {cfg.medium!r}")


def aligned_layer_width(geometry: Geometry, spec: BasisSpec) -> float:
    """Two spatial basis elements along the shortest edge."""
    n_el = spec.k - spec.degree + 4
    return 2.0 * float((geometry.hi - geometry.lo).min()) / n_el


@dataclass(eq=False)
class Dataset:
    """A synthetic inverse problem with its ground truth.

    ``record`` holds the (possibly noisy) traces and their second time
    derivatives; ``w_star`` is ``u_tt - F`` on ``Q_T`` computed from the
    clean forward solution.
    """

    config: DatasetConfig
    geometry: Geometry
    grid: Grid
    medium: Medium
    initial: InitialData
    solution: WaveSolution
    record: BoundaryRecord
    lifting: LiftingField
    basis: TensorBasis
    params: AdmissibleParams
    utt: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def w_star(self) -> np.ndarray:
        return self.utt - self.lifting.F

    @cached_property
    def problem(self) -> Problem:
        return Problem(self.params, self.basis)

    @cached_property
    def B_star(self) -> np.ndarray:
        """L2 projection of the ground truth onto the basis."""
        return project(self.w_star, self.basis)

    @cached_property
    def c_true(self) -> np.ndarray:
        return self.medium(self.grid.x_nodes)

    def background_start(self, c_bg: float | None = None) -> np.ndarray:
        """Coefficients whose ``t = 0`` slice matches the constant medium ``c_bg``.

        The slice ``Laplace f / c_bg - F(., 0)`` is fitted by least squares
        and extended constantly in time.
        """
        c_bg = self.config.base if c_bg is None else c_bg
        target = self.params.lap_f / c_bg - self.params.F0
        field_ = np.broadcast_to(target[..., None], self.grid.shape)
        return project(np.ascontiguousarray(field_), self.basis)


def build_dataset(cfg: DatasetConfig) -> Dataset:
    """Forward solve, trace extraction, noise, differentiation and lifting."""
    geo = make_geometry((cfg.omega_lo, cfg.omega_hi), cfg.x0, cfg.eta, cfg.T, cfg.d_level)
    grid = make_grid(geo, cfg.n_x, cfg.n_t)
    medium = make_medium(cfg)
    initial = gaussian_source(cfg.source_center, cfg.source_width, cfg.source_amp)
    sol = solve_wave(medium, initial, grid, enlargement=cfg.enlargement, refine=cfg.refine)
    clean = extract_boundary(sol)
    noisy = add_noise(clean, cfg.delta, cfg.seed, cfg.noise_mode)
    record = differentiate_record(noisy, grid.h_t, kappa0=cfg.kappa0)
    spec = BasisSpec(cfg.degree, cfg.k, cfg.m, cfg.k_t)
    layer = cfg.layer_width if cfg.layer_width is not None else aligned_layer_width(geo, spec)
    lifting = lifting_from_record(record, grid, layer, cfg.degree)
    x = grid.x_nodes
    grad_lap = initial.grad_laplacian(x)
    params = AdmissibleParams(
        grid,
        b=cfg.b,
        R=cfg.R,
        lap_f=initial.laplacian(x),
        F=lifting.F,
        grad_lap_f=[grad_lap[..., i] for i in range(geo.dim)],
        grad_F0=lifting.grad0,
    )
    basis = TensorBasis(spec, grid)
    return Dataset(cfg, geo, grid, medium, initial, sol, record, lifting, basis, params, sol.utt())


def sample_admissible(
    dataset: Dataset,
    n: int,
    rng: np.random.Generator,
    center: np.ndarray | None = None,
    scale: float = 0.2,
    max_shrink: int = 30,
) -> list[np.ndarray]:
    """Random interior points of ``G_{m,k}`` around ``center`` (default: projected ``w*``).

    Each draw is ``center + s * |center| * z / |z|`` with ``z`` standard normal
    and ``s`` drawn uniformly in ``(0, scale]``; ``s`` is halved until every
    membership margin is positive.
    """
    basis, params = dataset.basis, dataset.params
    center = dataset.B_star if center is None else np.ravel(center)
    if not membership(center, params, basis).interior:
        raise CIPError("SAMPLING_FAILED", "sampling centre is not an interior point of G")
    radius = float(np.linalg.norm(center)) or 1.0
    out = []
    for _ in range(n):
        z = rng.standard_normal(center.size)
        z /= np.linalg.norm(z)
        s = scale * rng.uniform(0.0, 1.0)
        for _ in range(max_shrink):
            cand = center + s * radius * z
            if membership(cand, params, basis).interior:
                out.append(cand)
                break
            s *= 0.5
        else:
            raise CIPError("SAMPLING_FAILED", f"no interior point after {max_shrink} halvings")
    return out
