"""File formats: binary field container, CSV exports, sectioned run configs, manifests.

Binary container layout (all little-endian)::

    int64    dim
    int64    n_x[dim]
    int64    n_t
    float64  h_x[dim]
    float64  h_t
    float64  values (row-major)

The value count tells the payload apart: a space-time field has
``prod(n_x) * n_t`` values, a spatial field ``prod(n_x)``, and a boundary
record ``2 dim * max(n_x)^(dim-1) * n_t`` (one leading face axis, shorter
faces padded with NaN).
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import platform
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CIPError
from .forward import BoundaryRecord, faces
from .geometry import Grid

_I8 = np.dtype("<i8")
_F8 = np.dtype("<f8")


# ---------------------------------------------------------------------------
# binary container


@dataclass(frozen=True)
class FieldHeader:
    dim: int
    n_x: tuple[int, ...]
    n_t: int
    h_x: tuple[float, ...]
    h_t: float

    @classmethod
    def from_grid(cls, grid: Grid) -> "FieldHeader":
        return cls(grid.dim, tuple(grid.n_x), grid.n_t, tuple(float(h) for h in grid.h_x), float(grid.h_t))

    def pack(self) -> bytes:
        ints = np.array([self.dim, *self.n_x, self.n_t], dtype=_I8)
        floats = np.array([*self.h_x, self.h_t], dtype=_F8)
        return ints.tobytes() + floats.tobytes()

    @property
    def nbytes(self) -> int:
        return 8 * (2 * self.dim + 3)

    def face_shape(self) -> tuple[int, ...]:
        return (max(self.n_x),) * (self.dim - 1)


def _write_payload(path, header: FieldHeader, values: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(header.pack())
        fh.write(np.ascontiguousarray(values, dtype=_F8).tobytes())


def _read_raw(path) -> tuple[FieldHeader, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise CIPError("FORMAT_ERROR", f"{path}: truncated header")
    dim = int(np.frombuffer(data[:8], dtype=_I8)[0])
    if not 1 <= dim <= 3:
        raise CIPError("FORMAT_ERROR", f"{path}: dim={dim}")
    ints = np.frombuffer(data[: 8 * (dim + 2)], dtype=_I8)
    floats = np.frombuffer(data[8 * (dim + 2) : 8 * (2 * dim + 3)], dtype=_F8)
    header = FieldHeader(dim, tuple(int(n) for n in ints[1 : dim + 1]), int(ints[dim + 1]), tuple(float(h) for h in floats[:dim]), float(floats[dim]))
    body = data[header.nbytes :]
    if len(body) % 8:
        raise CIPError("FORMAT_ERROR", f"{path}: payload is not a whole number of float64 values")
    return header, np.frombuffer(body, dtype=_F8).copy()


def write_field(path, values: np.ndarray, grid: Grid) -> None:
    """Space-time (``grid.shape``) or spatial (``grid.spatial_shape``) field."""
    values = np.asarray(values, dtype=float)
    if values.shape not in (grid.shape, grid.spatial_shape):
        raise CIPError("TRACE_SHAPE_MISMATCH", f"field of shape {values.shape} does not fit grid {grid.shape}")
    _write_payload(path, FieldHeader.from_grid(grid), values)


def read_field(path) -> tuple[np.ndarray, FieldHeader]:
    header, vals = _read_raw(path)
    full = (*header.n_x, header.n_t)
    if vals.size == int(np.prod(full)):
        return vals.reshape(full), header
    if vals.size == int(np.prod(header.n_x)):
        return vals.reshape(header.n_x), header
    raise CIPError("FORMAT_ERROR", f"{path}: {vals.size} values fit neither a field nor a spatial field")


def _face_extent(header: FieldHeader, axis: int) -> tuple[int, ...]:
    return tuple(n for i, n in enumerate(header.n_x) if i != axis)


def write_traces(path, traces: list[np.ndarray], grid: Grid) -> None:
    """Per-face traces stacked along a leading face axis (NaN padded)."""
    header = FieldHeader.from_grid(grid)
    fs = header.face_shape()
    out = np.full((2 * grid.dim, *fs, grid.n_t), np.nan)
    for f, ((ax, _side), tr) in enumerate(zip(faces(grid.dim), traces)):
        ext = _face_extent(header, ax)
        tr = np.asarray(tr, dtype=float).reshape(*ext, grid.n_t)
        out[(f, *(slice(0, n) for n in ext))] = tr
    _write_payload(path, header, out)


def read_traces(path) -> tuple[list[np.ndarray], FieldHeader]:
    header, vals = _read_raw(path)
    fs = header.face_shape()
    shape = (2 * header.dim, *fs, header.n_t)
    if vals.size != int(np.prod(shape)):
        raise CIPError("FORMAT_ERROR", f"{path}: {vals.size} values do not form a boundary record")
    arr = vals.reshape(shape)
    out = []
    for f, (ax, _side) in enumerate(faces(header.dim)):
        ext = _face_extent(header, ax)
        out.append(arr[(f, *(slice(0, n) for n in ext))].copy())
    return out, header


def write_record(directory, record: BoundaryRecord, grid: Grid, prefix: str = "record") -> list[Path]:
    d = Path(directory)
    paths = []
    for name in ("s", "p", "s_bar", "p_bar"):
        tr = getattr(record, name)
        if tr is None:
            continue
        path = d / f"{prefix}_{name}.bin"
        write_traces(path, tr, grid)
        paths.append(path)
    return paths


def read_record(directory, noise_level: float = 0.0, prefix: str = "record") -> BoundaryRecord:
    d = Path(directory)
    got = {}
    for name in ("s", "p", "s_bar", "p_bar"):
        path = d / f"{prefix}_{name}.bin"
        got[name] = read_traces(path)[0] if path.exists() else None
    if got["s"] is None or got["p"] is None:
        raise CIPError("CONFIG_ERROR", f"{d}: boundary record files missing")
    return BoundaryRecord(got["s"], got["p"], got["s_bar"], got["p_bar"], noise_level)


# ---------------------------------------------------------------------------
# CSV


def field_to_csv(path, values: np.ndarray, grid: Grid) -> None:
    """One row per node: spatial coordinates, ``t`` (space-time fields only), value."""
    values = np.asarray(values, dtype=float)
    x = grid.x_nodes.reshape(-1, grid.dim)
    names = [f"x{i}" for i in range(grid.dim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if values.shape == grid.spatial_shape:
            w.writerow([*names, "value"])
            for xi, v in zip(x, values.ravel()):
                w.writerow([*map(repr, map(float, xi)), repr(float(v))])
        elif values.shape == grid.shape:
            w.writerow([*names, "t", "value"])
            flat = values.reshape(-1, grid.n_t)
            for xi, row in zip(x, flat):
                for t, v in zip(grid.t, row):
                    w.writerow([*map(repr, map(float, xi)), repr(float(t)), repr(float(v))])
        else:
            raise CIPError("TRACE_SHAPE_MISMATCH", f"field of shape {values.shape} does not fit grid {grid.shape}")


def rows_to_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


# ---------------------------------------------------------------------------
# run configuration

# section -> key -> (parser, default); REQUIRED marks keys without a default
REQUIRED = object()


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _points(text: str) -> tuple[tuple[float, ...], ...]:
    """``a b; c d`` -> ``((a, b), (c, d))``."""
    return tuple(_floats(p) for p in text.split(";") if p.strip())


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none") else int(text)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


SCHEMA: dict[str, dict[str, tuple]] = {
    "geometry": {
        "dim": (int, REQUIRED),
        "omega_lo": (_floats, REQUIRED),
        "omega_hi": (_floats, REQUIRED),
        "x0": (_floats, REQUIRED),
        "eta": (float, REQUIRED),
        "T": (float, REQUIRED),
        "d_level": (float, REQUIRED),
    },
    "medium": {
        "kind": (str, REQUIRED),
        "base": (float, 1.3),
        "b": (float, 3.0),
        "centers": (_points, ((1.2,),)),
        "amps": (_floats, (1.0,)),
        "widths": (_floats, (0.9,)),
    },
    "source": {
        "center": (_floats, REQUIRED),
        "width": (float, 1.0),
        "amp": (float, 1.0),
    },
    "grid": {
        "n_x": (_ints, REQUIRED),
        "n_t": (int, REQUIRED),
        "refine": (int, 2),
        "enlargement": (float, 7.0),
    },
    "basis": {
        "degree": (int, REQUIRED),
        "k": (int, REQUIRED),
        "k_t": (_opt_int, None),
        "m": (int, REQUIRED),
        "R": (float, 1e3),
    },
    "preprocess": {
        "kappa0": (float, 1.0),
        "layer_width": (_opt_float, None),
    },
    "noise": {
        "delta": (float, 0.0),
        "mode": (str, "iid"),
    },
    "functional": {
        "lambda": (_opt_float, 0.0),
        "alpha": (_opt_float, None),
        "c_hat": (float, 1e-7),
        "enforce_cone": (_bool, True),
    },
    "descent": {
        "sigma": (_opt_float, None),
        "sigma_fraction": (float, 1.0),
        "theta": (float, 1e-8),
        "max_iters": (int, 20000),
        "policy": (str, "backtrack"),
        "start": (str, "sample"),
        "start_scale": (float, 0.2),
    },
    "reconstruct": {
        "n_cells": (_opt_int, None),
        "degree": (int, 3),
        "lumped": (_bool, True),
    },
    "verify": {
        "property": (str, "set_convexity"),
        "scale": (_opt_float, None),
        "lambda_grid": (_floats, (0.0, 1.0, 2.0, 4.0, 8.0)),
        "samples": (int, 20),
    },
    "experiment": {
        "kind": (str, "delta"),
        "deltas": (_floats, (0.08, 0.04, 0.02, 0.01)),
        "lambdas": (_floats, (0.0, 0.5, 1.0)),
    },
    "io": {
        "dir": (str, REQUIRED),
    },
    "run": {
        "seed": (int, REQUIRED),
        "threads": (_opt_int, None),
    },
}


@dataclass
class RunConfig:
    """Parsed, validated configuration: ``values[section][key]`` plus the canonical text."""

    values: dict
    source: str = ""

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def canonical(self) -> dict:
        """JSON-ready form with tuples turned into lists (stable key order)."""

        def conv(v):
            if isinstance(v, tuple):
                return [conv(x) for x in v]
            return v

        return {s: {k: conv(v) for k, v in sorted(kv.items())} for s, kv in sorted(self.values.items())}

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def to_ini(self) -> str:
        lines = []
        for s, kv in self.canonical().items():
            lines.append(f"[{s}]")
            for k, v in kv.items():
                lines.append(f"{k} = {_ini_value(v)}")
            lines.append("")
        return "\n".join(lines)


def _ini_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, list):
        if v and isinstance(v[0], list):
            return "; ".join(" ".join(repr(x) for x in p) for p in v)
        return " ".join(repr(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_overrides(items) -> dict[tuple[str, str], str]:
    """``section.key=value`` strings -> mapping."""
    out = {}
    for item in items or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise CIPError("CONFIG_ERROR", f"override {item!r} is not of the form section.key=value")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        out[(section, key)] = value.strip()
    return out


def load_config(path, overrides: dict[tuple[str, str], str] | None = None) -> RunConfig:
    """Read an ini-style file (or a manifest JSON) and validate it against ``SCHEMA``."""
    path = Path(path)
    if not path.exists():
        raise CIPError("CONFIG_ERROR", f"config file {path} not found", key=str(path))
    text = path.read_text()
    raw: dict[str, dict[str, str]] = {}
    if path.suffix == ".json":
        data = json.loads(text)
        cfg = data.get("config", data)
        for s, kv in cfg.items():
            raw[s] = {k: _ini_value(v) for k, v in kv.items()}
    else:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise CIPError("CONFIG_ERROR", f"{path}: {exc}".replace("\n", " ")) from exc
        raw = {s: dict(cp[s]) for s in cp.sections()}
    for (s, k), v in (overrides or {}).items():
        raw.setdefault(s, {})[k] = v
    return validate(raw, text)


def validate(raw: dict[str, dict[str, str]], source: str = "") -> RunConfig:
    values: dict[str, dict] = {}
    for s in raw:
        if s not in SCHEMA:
            raise CIPError("CONFIG_ERROR", f"unknown section [{s}]", key=s)
    for s, keys in SCHEMA.items():
        sec = raw.get(s, {})
        for k in sec:
            if k not in keys:
                raise CIPError("CONFIG_ERROR", f"unknown key {s}.{k}", key=f"{s}.{k}")
        values[s] = {}
        for k, (parse, default) in keys.items():
            if k in sec:
                try:
                    values[s][k] = parse(sec[k])
                except ValueError as exc:
                    raise CIPError("CONFIG_ERROR", f"bad value for {s}.{k}: {sec[k]!r}", key=f"{s}.{k}") from exc
            elif default is REQUIRED:
                raise CIPError("CONFIG_ERROR", f"missing key {s}.{k}", key=f"{s}.{k}")
            else:
                values[s][k] = default
    g = values["geometry"]
    dim = g["dim"]
    for k in ("omega_lo", "omega_hi", "x0"):
        if len(g[k]) != dim:
            raise CIPError("CONFIG_ERROR", f"geometry.{k} needs {dim} entries", key=f"geometry.{k}")
    if len(values["grid"]["n_x"]) not in (1, dim):
        raise CIPError("CONFIG_ERROR", f"grid.n_x needs 1 or {dim} entries", key="grid.n_x")
    return RunConfig(values, source)


def dataset_config(cfg: RunConfig):
    """The :class:`DatasetConfig` described by a run configuration."""
    from .datasets import DatasetConfig

    g, med, src, grd, bas = cfg["geometry"], cfg["medium"], cfg["source"], cfg["grid"], cfg["basis"]
    n_x = grd["n_x"] if len(grd["n_x"]) == g["dim"] else grd["n_x"] * g["dim"]
    return DatasetConfig(
        omega_lo=g["omega_lo"],
        omega_hi=g["omega_hi"],
        x0=g["x0"],
        eta=g["eta"],
        T=g["T"],
        d_level=g["d_level"],
        medium=med["kind"],
        base=med["base"],
        b=med["b"],
        bump_centers=med["centers"],
        bump_amps=med["amps"],
        bump_widths=med["widths"],
        source_center=src["center"],
        source_width=src["width"],
        source_amp=src["amp"],
        n_x=tuple(n_x),
        n_t=grd["n_t"],
        refine=grd["refine"],
        enlargement=grd["enlargement"],
        degree=bas["degree"],
        k=bas["k"],
        k_t=bas["k_t"],
        m=bas["m"],
        R=bas["R"],
        layer_width=cfg["preprocess"]["layer_width"],
        delta=cfg["noise"]["delta"],
        noise_mode=cfg["noise"]["mode"],
        kappa0=cfg["preprocess"]["kappa0"],
        seed=cfg["run"]["seed"],
    )


# ---------------------------------------------------------------------------
# manifest


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict[str, str]:
    import scipy

    from . import __version__

    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__, "carleman_cip": __version__}


def write_manifest(directory, subcommand: str, cfg: RunConfig, artifacts: list[Path], extra: dict | None = None) -> Path:
    """``manifest_<subcommand>.json``: config, its hash, seed, versions, artifact hashes."""
    d = Path(directory)
    body = {
        "subcommand": subcommand,
        "config_hash": cfg.digest(),
        "seed": cfg["run"]["seed"],
        "versions": versions(),
        "config": cfg.canonical(),
        "artifacts": {Path(p).name: file_digest(p) for p in sorted(artifacts)},
    }
    if extra:
        body.update(extra)
    path = d / f"manifest_{subcommand}.json"
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return path
