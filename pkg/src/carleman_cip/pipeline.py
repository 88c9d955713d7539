"""Disk-backed pipeline stages behind the command line: synth, preprocess, solve, reconstruct.

Every stage reads its inputs from the io directory of a :class:`RunConfig`
and writes its artifacts there; nothing outside that directory is touched.

Artifacts (binary container unless noted)::

    synth        u_QT.bin  utt_QT.bin  c_true.bin  record_s.bin  record_p.bin  medium.json
    preprocess   record_s_bar.bin  record_p_bar.bin  F_QT.bin  gradF0_<i>.bin  preprocess_report.txt
    solve        trace.csv  solve_summary.txt  w_min_QT.bin  B_min.csv  (+ reconstruct artifacts)
    reconstruct  c_cells.csv  c_grid.bin  c_pointwise.bin  reconstruct_report.txt
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import fileio
from .admissible import AdmissibleParams, membership, recover_c_pointwise
from .basis import BasisSpec, TensorBasis, project
from .datasets import DatasetConfig, aligned_layer_width, make_medium
from .descent import DescentConfig, DescentTrace, minimize
from .errors import CIPError
from .forward import add_noise, extract_boundary, gaussian_source, solve_wave
from .functional import FunctionalConfig, Problem, theorem_alpha
from .geometry import Grid, make_geometry, make_grid
from .preprocess import differentiate_record, lifting_from_record
from .reconstruct import RecoverySpace, assemble_and_solve, cell_average, core_mask, default_space, relative_l2
from .verify import noise_parameters

SYNTH_FILES = ("u_QT.bin", "utt_QT.bin", "c_true.bin", "record_s.bin", "record_p.bin", "medium.json")
PREPROCESS_FILES = ("record_s_bar.bin", "record_p_bar.bin", "F_QT.bin")


def io_dir(cfg: fileio.RunConfig) -> Path:
    d = Path(cfg["io"]["dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _setup(dcfg: DatasetConfig):
    geo = make_geometry((dcfg.omega_lo, dcfg.omega_hi), dcfg.x0, dcfg.eta, dcfg.T, dcfg.d_level)
    return geo, make_grid(geo, dcfg.n_x, dcfg.n_t)


def _basis_spec(dcfg: DatasetConfig) -> BasisSpec:
    return BasisSpec(dcfg.degree, dcfg.k, dcfg.m, dcfg.k_t)


# ---------------------------------------------------------------------------
# synth


def synth(cfg: fileio.RunConfig) -> list[Path]:
    """Forward solve, boundary traces with noise, ground-truth fields and the medium spec."""
    d = io_dir(cfg)
    dcfg = fileio.dataset_config(cfg)
    geo, grid = _setup(dcfg)
    medium = make_medium(dcfg)
    initial = gaussian_source(dcfg.source_center, dcfg.source_width, dcfg.source_amp)
    sol = solve_wave(medium, initial, grid, enlargement=dcfg.enlargement, refine=dcfg.refine)
    record = add_noise(extract_boundary(sol), dcfg.delta, dcfg.seed, dcfg.noise_mode)
    out = [d / "u_QT.bin", d / "utt_QT.bin", d / "c_true.bin"]
    fileio.write_field(out[0], sol.restrict(), grid)
    fileio.write_field(out[1], sol.utt(), grid)
    fileio.write_field(out[2], medium(grid.x_nodes), grid)
    out += fileio.write_record(d, record, grid)
    spec = {"kind": dcfg.medium, "base": dcfg.base, "b": dcfg.b, "b_bar": medium.b_bar}
    if dcfg.medium != "constant":
        spec.update(centers=[list(c) for c in dcfg.bump_centers], amps=list(dcfg.bump_amps), widths=list(dcfg.bump_widths))
    med = d / "medium.json"
    med.write_text(json.dumps(spec, indent=2, sort_keys=True) + "\n")
    return out + [med]


# ---------------------------------------------------------------------------
# preprocess


def _require(d: Path, names) -> None:
    missing = [n for n in names if not (d / n).exists()]
    if missing:
        raise CIPError("CONFIG_ERROR", f"{d}: missing {', '.join(missing)}", key=missing[0])


def _check_grid(header: fileio.FieldHeader, grid: Grid, name: str) -> None:
    if header.n_x != tuple(grid.n_x) or header.n_t != grid.n_t:
        raise CIPError("TRACE_SHAPE_MISMATCH", f"{name} was written on a grid {header.n_x}x{header.n_t}, config has {tuple(grid.n_x)}x{grid.n_t}")


def layer_width(dcfg: DatasetConfig, geo) -> float:
    return dcfg.layer_width if dcfg.layer_width is not None else aligned_layer_width(geo, _basis_spec(dcfg))


def preprocess(cfg: fileio.RunConfig) -> list[Path]:
    """``s_bar``, ``p_bar`` and the lifting ``F`` with a residual report."""
    d = io_dir(cfg)
    _require(d, ("record_s.bin", "record_p.bin"))
    dcfg = fileio.dataset_config(cfg)
    geo, grid = _setup(dcfg)
    _check_grid(fileio.read_traces(d / "record_s.bin")[1], grid, "record_s.bin")
    raw = fileio.read_record(d, dcfg.delta)
    rec = differentiate_record(raw, grid.h_t, kappa0=dcfg.kappa0)
    lift = lifting_from_record(rec, grid, layer_width(dcfg, geo), dcfg.degree)
    out = fileio.write_record(d, replace(rec, s=[], p=[]), grid)
    out = [p for p in out if p.name in ("record_s_bar.bin", "record_p_bar.bin")]
    fileio.write_field(d / "F_QT.bin", lift.F, grid)
    out.append(d / "F_QT.bin")
    for i, g0 in enumerate(lift.grad0):
        path = d / f"gradF0_{i}.bin"
        fileio.write_field(path, g0, grid)
        out.append(path)
    report = {**lift.report(), "delta_hint": dcfg.delta, "kappa0": dcfg.kappa0}
    rp = d / "preprocess_report.txt"
    rp.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return out + [rp]


# ---------------------------------------------------------------------------
# problem from disk


@dataclass
class DiskProblem:
    grid: Grid
    problem: Problem
    params: AdmissibleParams
    basis: TensorBasis
    lap_f: np.ndarray
    F: np.ndarray


def load_problem(cfg: fileio.RunConfig) -> DiskProblem:
    d = io_dir(cfg)
    _require(d, PREPROCESS_FILES)
    dcfg = fileio.dataset_config(cfg)
    geo, grid = _setup(dcfg)
    F, head = fileio.read_field(d / "F_QT.bin")
    _check_grid(head, grid, "F_QT.bin")
    grad0 = [fileio.read_field(d / f"gradF0_{i}.bin")[0] for i in range(grid.dim)]
    initial = gaussian_source(dcfg.source_center, dcfg.source_width, dcfg.source_amp)
    x = grid.x_nodes
    gl = initial.grad_laplacian(x)
    params = AdmissibleParams(
        grid,
        b=dcfg.b,
        R=dcfg.R,
        lap_f=initial.laplacian(x),
        F=F,
        grad_lap_f=[gl[..., i] for i in range(grid.dim)],
        grad_F0=grad0,
        check_cone=cfg["functional"]["enforce_cone"],
    )
    basis = TensorBasis(_basis_spec(dcfg), grid)
    return DiskProblem(grid, Problem(params, basis), params, basis, params.lap_f, F)


def functional_config(cfg: fileio.RunConfig, geometry) -> FunctionalConfig:
    """``lambda``/``alpha`` from the config; ``auto`` entries follow the noise-level rules."""
    fc, delta = cfg["functional"], cfg["noise"]["delta"]
    lam, alpha = fc["lambda"], fc["alpha"]
    if lam is None:
        lam = noise_parameters(delta, geometry, fc["c_hat"])[0] if delta > 0 else 0.0
    if alpha is None:
        alpha = noise_parameters(delta, geometry, fc["c_hat"])[1] if delta > 0 and fc["lambda"] is None else theorem_alpha(fc["c_hat"], lam, geometry.N)
    return FunctionalConfig(float(lam), float(alpha), cfg["basis"]["m"], fc["c_hat"])


def descent_config(cfg: fileio.RunConfig) -> DescentConfig:
    dc = cfg["descent"]
    return DescentConfig(
        sigma=dc["sigma"],
        theta=dc["theta"],
        max_iters=dc["max_iters"],
        membership_policy=dc["policy"],
        sigma_fraction=dc["sigma_fraction"],
    )


def start_point(cfg: fileio.RunConfig, dp: DiskProblem) -> np.ndarray:
    """Step 0: an interior point of ``G``.

    ``sample`` perturbs the projection of the synthetic ``u_tt - F`` by a
    seeded random direction (shrunk until interior); ``background`` fits the
    ``t = 0`` slice of the constant medium ``medium.base``.
    """
    d = io_dir(cfg)
    mode = cfg["descent"]["start"]
    if mode == "sample":
        _require(d, ("utt_QT.bin",))
        utt = fileio.read_field(d / "utt_QT.bin")[0]
        center = project(utt - dp.F, dp.basis)
        rng = np.random.default_rng([cfg["run"]["seed"], 0])
        z = rng.standard_normal(center.size)
        z /= np.linalg.norm(z)
        s = cfg["descent"]["start_scale"] * float(np.linalg.norm(center))
        for _ in range(40):
            cand = center + s * z
            if membership(cand, dp.params, dp.basis).interior:
                return cand
            s *= 0.5
        raise CIPError("SAMPLING_FAILED", "no interior start point near the projected ground truth")
    if mode == "background":
        target = dp.lap_f / cfg["medium"]["base"] - dp.params.F0
        field_ = np.ascontiguousarray(np.broadcast_to(target[..., None], dp.grid.shape))
        B = project(field_, dp.basis)
        if not membership(B, dp.params, dp.basis).interior:
            raise CIPError("LEFT_SET", "background start point is not an interior point of G")
        return B
    raise CIPError("CONFIG_ERROR", f"unknown start mode {mode!r}", key="descent.start")


def solve(cfg: fileio.RunConfig) -> tuple[list[Path], DescentTrace]:
    """Steps 0 to 3 (start, descent to ``|g| <= theta``, terminal ``w``), then reconstruction."""
    d = io_dir(cfg)
    out: list[Path] = []
    if not all((d / n).exists() for n in SYNTH_FILES):
        out += synth(cfg)
    if not all((d / n).exists() for n in PREPROCESS_FILES):
        out += preprocess(cfg)
    dp = load_problem(cfg)
    fcfg = functional_config(cfg, dp.grid.geometry)
    B1 = start_point(cfg, dp)
    trace = minimize(B1, dp.problem, fcfg, descent_config(cfg))
    trace.to_csv(d / "trace.csv")
    w = dp.basis.synth(trace.terminal).reshape(dp.grid.shape)
    fileio.write_field(d / "w_min_QT.bin", w, dp.grid)
    fileio.rows_to_csv(d / "B_min.csv", ["index", "value"], [(i, float(v)) for i, v in enumerate(trace.terminal)])
    summary = d / "solve_summary.txt"
    summary.write_text(f"lambda      {fcfg.lam:.6g}\nalpha       {fcfg.alpha:.6e}\n{trace.summary()}\n")
    out += [d / "trace.csv", d / "w_min_QT.bin", d / "B_min.csv", summary]
    out += reconstruct(cfg)
    return out, trace


# ---------------------------------------------------------------------------
# reconstruct


def reconstruct(cfg: fileio.RunConfig) -> list[Path]:
    """Step 4: lumped FEM recovery of ``c`` from ``w_min(x, 0)`` and cell averaging."""
    d = io_dir(cfg)
    _require(d, ("w_min_QT.bin",))
    dp = load_problem(cfg)
    w, head = fileio.read_field(d / "w_min_QT.bin")
    _check_grid(head, dp.grid, "w_min_QT.bin")
    rc = cfg["reconstruct"]
    space = default_space(dp.grid, rc["degree"]) if rc["n_cells"] is None else RecoverySpace(dp.grid, (rc["n_cells"],) * dp.grid.dim, rc["degree"])
    aux = assemble_and_solve(w[..., 0], dp.F[..., 0], dp.lap_f, space, lumped=rc["lumped"])
    pc = cell_average(aux, dp.params.b)
    point = recover_c_pointwise(w, dp.params)
    names = [f"x{i}" for i in range(dp.grid.dim)]
    fileio.rows_to_csv(d / "c_cells.csv", [*names, "c"], pc.rows())
    fileio.write_field(d / "c_grid.bin", pc.on_grid(), dp.grid)
    fileio.write_field(d / "c_pointwise.bin", point.c, dp.grid)
    report = {"n_cells": list(space.n_cells), "lumped": rc["lumped"], "clamped_cells": pc.clamped, "clamped_nodes": point.clamped}
    if (d / "c_true.bin").exists():
        c_true = fileio.read_field(d / "c_true.bin")[0]
        dcfg = fileio.dataset_config(cfg)
        core = core_mask(dp.grid, layer_width(dcfg, dp.grid.geometry))
        report["rel_l2_cells_core"] = relative_l2(pc.on_grid(), c_true, dp.grid, core)
        report["rel_l2_pointwise_core"] = relative_l2(point.c, c_true, dp.grid, core)
    rp = d / "reconstruct_report.txt"
    rp.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return [d / "c_cells.csv", d / "c_grid.bin", d / "c_pointwise.bin", rp]
