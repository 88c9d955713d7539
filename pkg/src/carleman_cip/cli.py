"""Command line front end: ``carleman-cip <subcommand> CONFIG [options]``.

Subcommands: ``synth``, ``preprocess``, ``solve``, ``reconstruct``,
``verify`` and ``experiment``.  Every flag is an override of the config
file; each run writes ``manifest_<subcommand>.json`` (full config, config
hash, seed, library versions, artifact hashes) into the io directory, and
that manifest is itself a valid config.

Exit statuses: 0 ok, 2 config, 3 numeric guard, 4 left the admissible set,
5 not converged, 1 anything else (including a failed certificate).  On
failure a single line ``ERROR <CODE>: <detail>`` goes to stderr.

Numeric libraries are imported lazily so the BLAS thread pools can be
pinned to one thread before they start; ``--threads`` (or the
``CARLEMAN_THREADS`` variable) sizes the sample-level worker pool instead,
which keeps results independent of the thread count.
"""

from __future__ import annotations

import argparse
import os
import sys

BLAS_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "BLIS_NUM_THREADS", "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS")
PROPERTIES = ("set_convexity", "strong_convexity", "volterra", "carleman", "convergence", "noise_scaling")
NOT_CONVERGED = {"MAX_ITERS": "MAX_ITERS", "STALLED": "NOT_CONVERGED", "BOUNDARY_MINIMIZER": "NOT_CONVERGED", "LEFT_SET": "LEFT_SET"}


def _pin_blas() -> None:
    for var in BLAS_VARS:
        os.environ[var] = "1"


def resolve_threads(flag: int | None) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get("CARLEMAN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="sectioned config file (or a manifest JSON)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config entry")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: CARLEMAN_THREADS, else all cores)")
    parser = argparse.ArgumentParser(prog="carleman-cip", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="forward solve and boundary data")
    sub.add_parser("preprocess", parents=[common], help="second time derivatives and lifting")
    sub.add_parser("solve", parents=[common], help="descent on the functional, then reconstruction")
    sub.add_parser("reconstruct", parents=[common], help="coefficient recovery from the terminal iterate")
    v = sub.add_parser("verify", parents=[common], help="run one numerical certificate")
    v.add_argument("--property", choices=PROPERTIES)
    v.add_argument("--lambda-grid", help="comma or space separated lambda values")
    v.add_argument("--samples", type=int)
    v.add_argument("--seed", type=int)
    e = sub.add_parser("experiment", parents=[common], help="noise-level or lambda sweep")
    e.add_argument("--kind", choices=("delta", "lambda"))
    e.add_argument("--deltas", help="comma or space separated noise levels")
    e.add_argument("--lambdas", help="comma or space separated lambda values")
    e.add_argument("--seed", type=int)
    return parser


def _flag_overrides(args) -> list[str]:
    """Subcommand flags expressed as config overrides (so manifests record them)."""
    out = list(args.overrides)
    pairs = {
        "property": "verify.property",
        "lambda_grid": "verify.lambda_grid",
        "samples": "verify.samples",
        "kind": "experiment.kind",
        "deltas": "experiment.deltas",
        "lambdas": "experiment.lambdas",
        "seed": "run.seed",
    }
    for attr, key in pairs.items():
        val = getattr(args, attr, None)
        if val is not None:
            out.append(f"{key}={val}")
    return out


def _verify(cfg, threads: int):
    from .datasets import build_dataset
    from .fileio import dataset_config
    from . import verify as V

    vc, seed = cfg["verify"], cfg["run"]["seed"]
    prop, lams, n = vc["property"], vc["lambda_grid"], vc["samples"]
    extra = {} if vc["scale"] is None else {"scale": vc["scale"]}
    if prop == "volterra":
        return V.certify_volterra(tuple(x for x in lams if x > 0), n, seed)
    if prop == "carleman":
        return V.probe_carleman(tuple(x for x in lams if x > 0), n, seed=seed)
    if prop == "noise_scaling":
        return _experiment(cfg, "delta")
    ds = build_dataset(dataset_config(cfg))
    c_hat, m = cfg["functional"]["c_hat"], cfg["basis"]["m"]
    if prop == "set_convexity":
        return V.certify_set_convexity(ds, n, seed, threads=threads, **extra)
    if prop == "strong_convexity":
        return V.certify_strong_convexity(ds, lams, n, seed, c_hat, m, threads=threads, **extra)
    if prop == "convergence":
        from .pipeline import descent_config

        lam = cfg["functional"]["lambda"] or 0.0
        return V.certify_convergence(ds, lam, n, seed, c_hat, m, descent_config(cfg), threads=threads, **extra)
    from .errors import CIPError

    raise CIPError("CONFIG_ERROR", f"unknown property {prop!r}", key="verify.property")


def _experiment(cfg, kind: str):
    from .fileio import dataset_config
    from .pipeline import descent_config
    from . import verify as V

    ec, fc = cfg["experiment"], cfg["functional"]
    dcfg = dataset_config(cfg)
    kw = dict(config=dcfg, c_hat=fc["c_hat"], dconfig=descent_config(cfg), seed=cfg["run"]["seed"], start_scale=cfg["descent"]["start_scale"], m=cfg["basis"]["m"])
    if kind == "delta":
        return V.experiment_noise_scaling(ec["deltas"], enforce_cone=fc["enforce_cone"], **kw)
    if kind == "lambda":
        return V.experiment_lambda_sweep(ec["lambdas"], **kw)
    from .errors import CIPError

    raise CIPError("CONFIG_ERROR", f"unknown experiment kind {kind!r}", key="experiment.kind")


def run(command: str, config_path: str, overrides: list[str], threads: int | None = None) -> int:
    """Execute one subcommand; returns the exit status."""
    from .errors import CIPError, exit_code
    from . import fileio, pipeline

    try:
        cfg = fileio.load_config(config_path, fileio.parse_overrides(overrides))
        n_threads = resolve_threads(threads if threads is not None else cfg["run"]["threads"])
        d = pipeline.io_dir(cfg)
        status = 0
        extra = {}
        if command == "synth":
            arts = pipeline.synth(cfg)
        elif command == "preprocess":
            arts = pipeline.preprocess(cfg)
        elif command == "solve":
            arts, trace = pipeline.solve(cfg)
            print((d / "solve_summary.txt").read_text().rstrip())
            extra["status"] = trace.status
            if trace.status != "CONVERGED":
                code = NOT_CONVERGED.get(trace.status, "NOT_CONVERGED")
                status = 4 if code == "LEFT_SET" else 5
                print(f"ERROR {code}: descent ended with {trace.status} after {len(trace) - 1} iterations", file=sys.stderr)
        elif command == "reconstruct":
            arts = pipeline.reconstruct(cfg)
            print((d / "reconstruct_report.txt").read_text().rstrip())
        elif command in ("verify", "experiment"):
            if command == "verify":
                rep = _verify(cfg, n_threads)
                stem = f"verify_{cfg['verify']['property']}"
            else:
                kind = cfg["experiment"]["kind"]
                rep = _experiment(cfg, kind)
                stem = f"experiment_{kind}"
            rep.to_csv(d / f"{stem}.csv")
            (d / f"{stem}_summary.txt").write_text(rep.summary() + "\n")
            arts = [d / f"{stem}.csv", d / f"{stem}_summary.txt"]
            print(rep.summary())
            extra["passed"] = bool(rep.passed)
            if not rep.passed:
                status = 1
                print(f"ERROR CERTIFICATE_FAILED: {rep.name} pass fraction {rep.pass_fraction:.6f}", file=sys.stderr)
        else:
            raise CIPError("CONFIG_ERROR", f"unknown subcommand {command!r}")
        fileio.write_manifest(d, command, cfg, arts, extra)
        return status
    except CIPError as exc:
        key = exc.info.get("key")
        detail = str(exc).split(": ", 1)[-1]
        print(f"ERROR {exc.code}: {detail}" + (f" [key={key}]" if key else ""), file=sys.stderr)
        return exit_code(exc.code)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _pin_blas()
    return run(args.command, args.config, _flag_overrides(args), args.threads)


if __name__ == "__main__":
    sys.exit(main())
