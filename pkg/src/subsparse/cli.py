"""Command-line front end: ``subsparse <command> [options]``.

Exit codes: 0 all enabled checks pass, 1 a check failed, 2 configuration
or input error, 3 solver non-convergence after retry.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, datagen, verify
from .config import CHECKS, ExperimentConfig, load_config, parse_config, with_overrides
from .exceptions import ConfigError, FormatError, NecessaryConditionViolated, SubsparseError, ZeroInradius
from .experiment import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_SOLVER,
    build_dataset,
    build_geometry,
    canonical_json,
    check_budget,
    load_report,
    run_pipeline,
    sweep,
)
from .matrix_io import export_dataset, import_dataset
from .solver import Status

DEFAULT_CONFIG = "orthogonal-planes.cfg"


def bundled_config_text(name: str = DEFAULT_CONFIG) -> str:
    return resources.files("subsparse").joinpath("configs", name).read_text()


def _load(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = parse_config(bundled_config_text(), source=f"<bundled {DEFAULT_CONFIG}>")
    checks = tuple(args.check) if getattr(args, "check", None) else None
    return with_overrides(cfg, seed=args.seed, jobs=args.jobs, out_dir=args.out, checks=checks)


def _emit(obj, out: Path | None, name: str) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True, default=str) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
        print(out / name)


def _out(args) -> Path | None:
    return Path(args.out) if args.out else None


def cmd_gen(args) -> int:
    cfg = _load(args)
    ds = build_dataset(cfg)
    path = export_dataset(ds, cfg.out_dir, cfg.encoding)
    print(path)
    return EXIT_OK


def cmd_geometry(args) -> int:
    cfg = _load(args)
    ds = import_dataset(args.data) if args.data else build_dataset(cfg)
    geo = build_geometry(cfg, ds)
    doc = {"geometry": geo.to_dict()}
    code = EXIT_OK
    try:
        doc["bounds"] = verify.compute_bounds(geo, ds.counts, ds.ambient_dim, cfg.delta).to_dict()
    except (NecessaryConditionViolated, ZeroInradius) as exc:
        doc["error"] = {"error": type(exc).__name__, "message": str(exc)}
        code = EXIT_CHECK_FAILED
    _emit(doc, _out(args), "geometry.json")
    return code


def cmd_solve(args) -> int:
    cfg = _load(args)
    ds = import_dataset(args.data) if args.data else build_dataset(cfg)
    geo = build_geometry(cfg, ds)
    try:
        bounds = verify.compute_bounds(geo, ds.counts, ds.ambient_dim, cfg.delta)
    except (NecessaryConditionViolated, ZeroInradius) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    label = args.label if args.label is not None else args.trial % ds.n_subspaces
    if not 0 <= label < ds.n_subspaces:
        raise ConfigError(f"--label must lie in [0, {ds.n_subspaces})")
    q = datagen.gen_query(ds, label, cfg.seed, args.trial)
    cert, res = verify.check_recovery(ds, q, bounds, cfg.solver_options(), query_index=args.trial)
    doc = {
        "certificate": cert.to_dict(),
        "coefficients": res.coefficients.tolist(),
        "iterations": res.iterations,
        "tau": bounds.tau,
    }
    _emit(doc, _out(args), "solve.json")
    if res.status is not Status.OPTIMAL:
        return EXIT_SOLVER
    return EXIT_OK if cert.residual_ok and cert.off_support_ok is not False else EXIT_CHECK_FAILED


def _print_checks(content: dict) -> None:
    for name, agg in content["checks"].items():
        frac = agg.get("fraction")
        detail = f"{agg['failures']}/{agg['trials']} failures" if frac is not None else ""
        print(f"{name:22s} {'PASS' if agg['passed'] else 'FAIL'}  {detail}")
    for s in content["skipped"]:
        print(f"{s['check']:22s} SKIP  {s['reason']}")
    for e in content["errors"]:
        print(f"error: {e['error']}: {e['message']}")


def cmd_verify(args) -> int:
    cfg = _load(args)
    check_budget(cfg)
    report = run_pipeline(cfg)
    path = report.write(cfg.out_dir)
    _print_checks(report.content)
    print(f"content_hash {report.content_hash}")
    print(path)
    return report.exit_code


def cmd_sweep(args) -> int:
    cfg = _load(args)
    text, reports, code = sweep(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(text)
    print(out / "sweep.csv")
    return code


def cmd_report(args) -> int:
    src = Path(args.report or args.out or "out")
    try:
        report = load_report(src)
    except FileNotFoundError:
        raise ConfigError(f"no report.json under {src}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{src / 'report.json'}: {exc.msg}", offset=exc.pos) from None
    stored = report.header.get("stored_hash")
    ok = stored == report.content_hash
    _print_checks(report.content)
    print(f"content_hash {report.content_hash} ({'matches' if ok else 'DOES NOT match'} stored hash)")
    return report.exit_code if ok else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (default: bundled orthogonal-planes.cfg)")
    common.add_argument("--seed", type=int, help="override the config seed (u64)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="worker processes")
    common.add_argument("--check", nargs="+", choices=CHECKS, metavar="NAME", help=f"checks to run ({', '.join(CHECKS)})")

    p = argparse.ArgumentParser(
        prog="subsparse",
        description="Generate union-of-subspaces data, solve constrained l1 programs and check the recovery bounds.",
        epilog="exit codes: 0 ok, 1 a check failed, 2 config or input error, 3 solver non-convergence",
    )
    p.add_argument("--version", action="version", version=f"subsparse {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a dataset and export it as SSMX files")
    g.set_defaults(func=cmd_gen)
    g = sub.add_parser("geometry", parents=[common], help="inradii, incoherences, margins, gamma and beta")
    g.add_argument("--data", help="dataset directory written by 'gen' (default: regenerate from config)")
    g.set_defaults(func=cmd_geometry)
    g = sub.add_parser("solve", parents=[common], help="solve one query and print its certificate")
    g.add_argument("--data", help="dataset directory written by 'gen'")
    g.add_argument("--trial", type=int, default=0, help="query trial index")
    g.add_argument("--label", type=int, help="subspace of the query (default: trial mod L)")
    g.set_defaults(func=cmd_solve)
    for name in ("verify", "run"):
        g = sub.add_parser(name, parents=[common], help="run all enabled checks and write report.json")
        g.set_defaults(func=cmd_verify)
    g = sub.add_parser("sweep", parents=[common], help="run the pipeline over the sweep grid, write sweep.csv")
    g.set_defaults(func=cmd_sweep)
    g = sub.add_parser("report", parents=[common], help="summarize a stored report and re-check its hash")
    g.add_argument("report", nargs="?", help="report directory (default: --out or ./out)")
    g.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SubsparseError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
