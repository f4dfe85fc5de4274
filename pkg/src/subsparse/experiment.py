"""generate -> geometry -> solve -> verify pipelines, reports and sweeps."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, datagen, verify
from .config import ExperimentConfig
from .datagen import Dataset, NoiseParams
from .exceptions import ConfigError, NecessaryConditionViolated, ZeroInradius
from .geometry import GeometryReport, recovery_margin
from .solver import SolverOptions, Status

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

BUDGET_ENV = "SUBSPARSE_BUDGET"


class BudgetExceeded(ConfigError):
    pass


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable).encode()


@dataclass
class RunReport:
    """Everything a run produced.

    ``header`` holds timestamps and wall-clock figures and is excluded from
    ``content_hash``; everything else is reproducible bit-for-bit.
    """

    content: dict
    trials: list[dict]
    header: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK

    @property
    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(canonical_json(self.content))
        for rec in self.trials:
            h.update(b"\n")
            h.update(canonical_json(rec))
        return h.hexdigest()

    def summary(self) -> dict:
        return {
            "header": self.header,
            "content": self.content,
            "exit_code": self.exit_code,
            "content_hash": self.content_hash,
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "trials.jsonl", "w") as fh:
            for rec in self.trials:
                fh.write(json.dumps(rec, sort_keys=True, default=_jsonable) + "\n")
        (out / "report.json").write_text(json.dumps(self.summary(), indent=1, sort_keys=True, default=_jsonable) + "\n")
        return out / "report.json"


def load_report(out_dir) -> RunReport:
    out = Path(out_dir)
    summary = json.loads((out / "report.json").read_text())
    trials = []
    tpath = out / "trials.jsonl"
    if tpath.exists():
        trials = [json.loads(line) for line in tpath.read_text().splitlines() if line]
    rep = RunReport(summary["content"], trials, summary.get("header", {}), summary.get("exit_code", EXIT_OK))
    rep.header["stored_hash"] = summary.get("content_hash")
    return rep


def budget_limit(cfg: ExperimentConfig) -> int:
    env = os.environ.get(BUDGET_ENV)
    if env is None:
        return cfg.budget
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{BUDGET_ENV}={env!r} is not an integer") from None


def check_budget(cfg: ExperimentConfig, cells: int = 1) -> int:
    needed = cells * cfg.solves_per_cell()
    limit = budget_limit(cfg)
    if needed > limit:
        raise BudgetExceeded(f"{needed} solves requested, budget is {limit} (set {BUDGET_ENV} to raise it)")
    return needed


def _pmap(fn, items, jobs):
    # Order of results always follows ``items``; reductions are order-independent of scheduling.
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    noise = NoiseParams(cfg.epsilon_raw, cfg.rho)
    return datagen.generate(cfg.ambient_dim, cfg.dims, cfg.counts, noise, cfg.seed, cfg.angle, cfg.normalize)


def build_geometry(cfg: ExperimentConfig, ds: Dataset) -> GeometryReport:
    method = None if cfg.inradius_method == "auto" else cfg.inradius_method
    return recovery_margin(list(ds.subspaces), [ds.points(i) for i in range(ds.n_subspaces)], ds.epsilon, method)


def _solve_with_retry(fn, opts: SolverOptions):
    out = fn(opts)
    res = out[1] if isinstance(out, tuple) else out
    if res.status is Status.MAX_ITERATIONS:
        out = fn(replace(opts, max_iterations=4 * opts.max_iterations, method="admm"))
    return out


def _recovery_trial(args):
    ds, bounds, opts, seed, t = args
    q = datagen.gen_query(ds, t % ds.n_subspaces, seed, t)
    cert, res = _solve_with_retry(lambda o: verify.check_recovery(ds, q, bounds, o, query_index=t), opts)
    return cert, res.status


def _nsp_chunk(args):
    ds, i, samples, bounds, opts = args
    return verify.check_nsp(ds, i, samples, bounds, opts)


def _lemma1_trial(args):
    ds, r, seed, t = args
    i = t % ds.n_subspaces
    S = ds.subspaces[i]
    g = datagen.stream(seed, datagen.STREAM_TRIAL, 1, t).standard_normal(S.dim)
    x = S.basis @ (g / np.linalg.norm(g))
    return i, verify.check_lemma1(S, ds.points(i), x, r=r[i])


def run_pipeline(cfg: ExperimentConfig, jobs: int | None = None) -> RunReport:
    """Run every enabled check; never raises for check failures (see ``exit_code``)."""
    jobs = cfg.jobs if jobs is None else jobs
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    timings = {}

    ds = build_dataset(cfg)
    n, L = ds.ambient_dim, ds.n_subspaces
    eps = ds.epsilon
    tic = time.perf_counter()
    geo = build_geometry(cfg, ds)
    timings["geometry"] = time.perf_counter() - tic

    content = {
        "artifact": {"name": "subsparse", "version": __version__},
        "config": cfg.to_dict(execution=False),
        "dataset": {
            "ambient_dim": n,
            "dims": [S.dim for S in ds.subspaces],
            "counts": ds.counts,
            "noise": ds.noise.to_dict(),
            "seed": ds.seed,
            "uniform_points": ds.uniform_points,
            "noise_norm_exceedance": float(np.mean(np.linalg.norm(ds.Z, axis=0) > eps)),
        },
        "geometry": geo.to_dict(),
        "bounds": None,
        "checks": {},
        "skipped": [],
        "errors": [],
    }
    checks, skipped, errors = content["checks"], content["skipped"], content["errors"]
    trials: list[dict] = []
    opts = cfg.solver_options()
    enabled = set(cfg.checks)
    nonconverged = 0

    bounds = None
    try:
        bounds = verify.compute_bounds(geo, ds.counts, n, cfg.delta)
        content["bounds"] = bounds.to_dict()
    except NecessaryConditionViolated as exc:
        errors.append({"error": "NecessaryConditionViolated", "message": str(exc), "margins": exc.margins})
    except ZeroInradius as exc:
        errors.append({"error": "ZeroInradius", "message": str(exc)})

    q_recovery = max(verify.lemma2_failure_probability(c, n) for c in ds.counts)
    needs_bounds = [c for c in ("recovery", "support", "nsp", "lemma3") if c in enabled]
    if bounds is None:
        for c in needs_bounds:
            skipped.append({"check": c, "reason": "gamma/beta undefined (see errors)"})
    else:
        n_rec = 0
        if enabled & {"recovery", "support"}:
            n_rec = cfg.trials
        if "lemma3" in enabled:
            n_rec = max(n_rec, cfg.lemma3_trials)
        tic = time.perf_counter()
        results = _pmap(_recovery_trial, [(ds, bounds, opts, cfg.seed, t) for t in range(n_rec)], jobs)
        timings["recovery"] = time.perf_counter() - tic
        certs = [c for c, _ in results]
        nonconverged += sum(st is not Status.OPTIMAL for _, st in results)
        for cert in certs:
            trials.append({"check": "recovery", **cert.to_dict()})

        head = certs[: cfg.trials]
        if "recovery" in enabled:
            checks["recovery_residual"] = verify.Aggregate(
                "recovery_residual", len(head), sum(not c.residual_ok for c in head), q_recovery
            ).to_dict()
            applicable = [c for c in head if c.off_support_ok is not None]
            if applicable:
                checks["recovery_off_support"] = verify.Aggregate(
                    "recovery_off_support", len(applicable), sum(not c.off_support_ok for c in applicable), q_recovery
                ).to_dict()
            else:
                skipped.append({"check": "recovery_off_support", "reason": "noise precondition fails for every subspace"})
        if "support" in enabled:
            if not ds.uniform_points:
                skipped.append({"check": "support", "reason": "HypothesisNotMet: points not uniform on the sphere"})
            else:
                applicable = [c for c in head if c.support_ok is not None]
                q_support = max(2.0 / c**2 for c in ds.counts)
                checks["support"] = verify.Aggregate(
                    "support", len(applicable), sum(not c.support_ok for c in applicable), q_support
                ).to_dict()
        if "lemma3" in enabled:
            lem3 = [verify.check_lemma3(c.objective, bounds, c.label) for c in certs[: cfg.lemma3_trials]]
            agg = verify.Aggregate("lemma3", len(lem3), sum(not b.passed for b in lem3), q_recovery).to_dict()
            agg["inradius_exact"] = all(bounds.inradius_exact)
            checks["lemma3"] = agg

        if "nsp" in enabled:
            if L < 2:
                skipped.append({"check": "nsp", "reason": "needs at least two subspaces"})
            else:
                tic = time.perf_counter()
                per = [cfg.nsp_samples // L + (1 if i < cfg.nsp_samples % L else 0) for i in range(L)]
                tasks = []
                for i in range(L):
                    samples = verify.sample_W(ds.subspaces[i], bounds, eps, per[i], seed=cfg.seed + i)
                    for k in range(0, len(samples), 20):
                        tasks.append((ds, i, samples[k : k + 20], bounds, opts))
                chunks = _pmap(_nsp_chunk, tasks, jobs)
                timings["nsp"] = time.perf_counter() - tic
                samples_out = []
                for (_, i, *_), chunk in zip(tasks, chunks):
                    for s in chunk:
                        samples_out.append(s)
                        trials.append({"check": "nsp", "subspace": i, **s.to_dict()})
                checks["nsp"] = verify.Aggregate(
                    "nsp", len(samples_out), sum(not s.strict_holds for s in samples_out), 0.0
                ).to_dict()

    if "lemma1" in enabled:
        r = geo.inradii
        if np.any(r <= 0):
            skipped.append({"check": "lemma1", "reason": "zero inradius"})
        else:
            tic = time.perf_counter()
            out = _pmap(_lemma1_trial, [(ds, r, cfg.seed, t) for t in range(cfg.lemma1_instances)], jobs)
            timings["lemma1"] = time.perf_counter() - tic
            for t, (i, b) in enumerate(out):
                trials.append({"check": "lemma1", "trial": t, "subspace": i, "measured": b.measured, "bound": b.bound, "passed": b.passed})
            checks["lemma1"] = verify.Aggregate("lemma1", len(out), sum(not b.passed for _, b in out), 0.0).to_dict()

    if "lemma2" in enabled:
        tic = time.perf_counter()
        checks["lemma2"] = run_lemma2(ds, cfg.lemma2_trials, cfg.seed).to_dict()
        timings["lemma2"] = time.perf_counter() - tic

    if "appendix" in enabled:
        tic = time.perf_counter()
        app = verify.check_appendix_bounds(
            n=cfg.appendix_n,
            rho=cfg.appendix_rho,
            epsilon_raw=cfg.epsilon_raw if cfg.epsilon_raw > 0 else 1.0,
            count=cfg.appendix_count,
            rows=cfg.appendix_rows,
            sigma=cfg.appendix_sigma,
            trials=cfg.appendix_trials,
            seed=cfg.seed,
        )
        timings["appendix"] = time.perf_counter() - tic
        checks["appendix"] = app.to_dict()

    for c in sorted(set(CHECK_ORDER) - enabled):
        skipped.append({"check": c, "reason": "not enabled"})

    content["nonconverged_solves"] = nonconverged
    if nonconverged:
        code = EXIT_SOLVER
    elif errors or not all(v["passed"] for v in checks.values()):
        code = EXIT_CHECK_FAILED
    else:
        code = EXIT_OK
    content["passed"] = code == EXIT_OK
    header = {
        "started_at": started,
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "wall_clock_s": time.perf_counter() - t0,
        "timings_s": timings,
        "jobs": jobs,
        "out_dir": cfg.out_dir,
        "budget": cfg.budget,
    }
    return RunReport(content, trials, header, code)


CHECK_ORDER = ("recovery", "support", "nsp", "lemma1", "lemma2", "lemma3", "appendix")


def run_lemma2(ds: Dataset, trials: int, seed: int, subspace: int = 0) -> verify.Aggregate:
    """Fresh noise block per trial against a coefficient vector fixed beforehand."""
    n = ds.ambient_dim
    count = ds.counts[subspace]
    c = datagen.stream(seed, datagen.STREAM_TRIAL, 2, 0).standard_normal(count)
    failures = 0
    for t in range(trials):
        Z = datagen.gen_noise(n, count, ds.noise, seed, datagen.STREAM_TRIAL, 0x200000 + t)
        failures += not verify.check_lemma2(Z, c, ds.epsilon).passed
    return verify.Aggregate("lemma2", trials, failures, verify.lemma2_failure_probability(count, n))


# ---------------------------------------------------------------------------
# sweeps

SWEEP_COLUMNS = ("epsilon_raw", "angle_deg", "counts", "metric", "value")


def metrics_from_report(report: RunReport) -> list[tuple[str, float]]:
    """Flat, fixed-order metrics of one run (one CSV row each)."""
    c = report.content
    geo = c["geometry"]["subspaces"]
    eps = c["dataset"]["noise"]["epsilon"]
    rows = [
        ("epsilon", eps),
        ("inradius_min", min(s["inradius"]["lower"] for s in geo)),
        ("incoherence_max", max(s["incoherence"] for s in geo)),
        ("margin_min", min(s["margin"] for s in geo)),
    ]
    b = c["bounds"]
    rows += [("gamma", b["gamma"] if b else math.nan), ("beta", b["beta"] if b else math.nan)]
    rec = [t for t in report.trials if t["check"] == "recovery"]
    if rec and eps > 0:
        ratios = [t["in_support_residual"] / eps for t in rec]
        rows += [
            ("residual_over_eps_max", max(ratios)),
            ("residual_over_eps_mean", float(np.mean(ratios))),
            ("off_support_over_eps_max", max(t["off_support_mass"] / eps for t in rec)),
            ("support_mass_min", min(t["support_mass"] for t in rec)),
        ]
    for name in sorted(c["checks"]):
        agg = c["checks"][name]
        if "fraction" in agg:
            rows.append((f"{name}.failure_fraction", agg["fraction"]))
        rows.append((f"{name}.passed", float(agg["passed"])))
    rows.append(("passed", float(c["passed"])))
    return rows


def _sweep_cell(args):
    cfg, jobs = args
    return run_pipeline(cfg, jobs=jobs)


def sweep(cfg: ExperimentConfig, jobs: int | None = None):
    """Run the pipeline on every grid cell. Returns (csv_text, reports, exit_code)."""
    jobs = cfg.jobs if jobs is None else jobs
    cells = cfg.sweep_cells
    check_budget(cfg, len(cells))
    cell_cfgs = [replace(cfg, epsilon_raw=e, angle_deg=a, counts=cnt).validate() for e, a, cnt in cells]
    # Parallelize across cells when there are several; otherwise inside the cell.
    if len(cells) > 1 and jobs > 1:
        reports = _pmap(_sweep_cell, [(c, 1) for c in cell_cfgs], jobs)
    else:
        reports = [run_pipeline(c, jobs=jobs) for c in cell_cfgs]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for (e, a, cnt), rep in zip(cells, reports):
        for metric, value in metrics_from_report(rep):
            w.writerow([repr(e), "none" if a is None else repr(a), " ".join(map(str, cnt)), metric, repr(float(value))])
    code = max((r.exit_code for r in reports), default=EXIT_OK)
    if any(r.exit_code == EXIT_SOLVER for r in reports):
        code = EXIT_SOLVER
    return buf.getvalue(), reports, code
