"""Experiment configuration: a sectioned ``key = value`` text file with typed fields.

Example::

    [experiment]
    seed = 20240601
    trials = 200
    checks = recovery, support, nsp, lemma3

    [data]
    ambient_dim = 50
    dims = 3, 3
    counts = 60, 60
    angle_deg = 90
    epsilon_raw = 0.01
    rho = 0.25

Unknown sections/keys and badly typed values are reported with the file
line number.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .exceptions import ConfigError
from .solver import SolverOptions

CHECKS = ("recovery", "support", "nsp", "lemma1", "lemma2", "lemma3", "appendix")
DEFAULT_BUDGET = 1_000_000


def _int(s):
    return int(s)


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _opt_float(s):
    return None if s.strip().lower() in ("none", "") else _float(s)


def _bool(s):
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean")


def _list(conv):
    def parse(s):
        items = [x for x in re.split(r"[,\s]+", s.strip()) if x]
        return tuple(conv(x) for x in items)

    parse.__name__ = f"list of {conv.__name__.strip('_')}"
    return parse


def _str(s):
    return s.strip()


def _checks(s):
    out = _list(_str)(s)
    unknown = [c for c in out if c not in CHECKS]
    if unknown:
        raise ValueError(f"unknown check(s) {unknown}; known: {', '.join(CHECKS)}")
    return out


# section -> key -> (attribute, parser)
SCHEMA = {
    "experiment": {
        "seed": ("seed", _int),
        "trials": ("trials", _int),
        "checks": ("checks", _checks),
        "nsp_samples": ("nsp_samples", _int),
        "lemma1_instances": ("lemma1_instances", _int),
        "lemma2_trials": ("lemma2_trials", _int),
        "lemma3_trials": ("lemma3_trials", _int),
    },
    "data": {
        "ambient_dim": ("ambient_dim", _int),
        "dims": ("dims", _list(_int)),
        "counts": ("counts", _list(_int)),
        "angle_deg": ("angle_deg", _opt_float),
        "epsilon_raw": ("epsilon_raw", _float),
        "rho": ("rho", _float),
        "normalize": ("normalize", _bool),
    },
    "bounds": {
        "delta": ("delta", _float),
        "inradius_method": ("inradius_method", _str),
    },
    "solver": {
        "max_iterations": ("max_iterations", _int),
        "primal_tol": ("primal_tol", _float),
        "dual_tol": ("dual_tol", _float),
        "gap_tol": ("gap_tol", _float),
        "rho": ("solver_rho", _float),
        "relaxation": ("relaxation", _float),
        "method": ("solver_method", _str),
    },
    "appendix": {
        "n": ("appendix_n", _int),
        "rho": ("appendix_rho", _float),
        "count": ("appendix_count", _int),
        "rows": ("appendix_rows", _int),
        "sigma": ("appendix_sigma", _float),
        "trials": ("appendix_trials", _int),
    },
    "sweep": {
        "epsilon_raw": ("sweep_epsilon_raw", _list(_float)),
        "angle_deg": ("sweep_angle_deg", _list(_float)),
        "counts": ("sweep_counts", _list(_int)),
    },
    "output": {
        "dir": ("out_dir", _str),
        "budget": ("budget", _int),
        "jobs": ("jobs", _int),
        "encoding": ("encoding", _str),
    },
}


# Settings that affect how a run executes but never its results.
EXECUTION_FIELDS = ("out_dir", "budget", "jobs")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    trials: int = 200
    checks: tuple[str, ...] = ("recovery", "support", "nsp", "lemma1", "lemma2", "lemma3", "appendix")
    nsp_samples: int = 200
    lemma1_instances: int = 200
    lemma2_trials: int = 10_000
    lemma3_trials: int = 500

    ambient_dim: int = 50
    dims: tuple[int, ...] = (3, 3)
    counts: tuple[int, ...] = (60, 60)
    angle_deg: float | None = 90.0
    epsilon_raw: float = 0.01
    rho: float = 0.25
    normalize: bool = True

    delta: float = 1e-3
    inradius_method: str = "auto"

    max_iterations: int = 100_000
    primal_tol: float = 1e-8
    dual_tol: float = 1e-8
    gap_tol: float = 1e-6
    solver_rho: float = 1.0
    relaxation: float = 1.6
    solver_method: str = "auto"

    appendix_n: int = 100
    appendix_rho: float = 0.1
    appendix_count: int = 100
    appendix_rows: int = 50
    appendix_sigma: float = 0.1
    appendix_trials: int = 10_000

    sweep_epsilon_raw: tuple[float, ...] = ()
    sweep_angle_deg: tuple[float, ...] = ()
    sweep_counts: tuple[int, ...] = ()

    out_dir: str = "out"
    budget: int = DEFAULT_BUDGET
    jobs: int = 1
    encoding: str = "f64le"

    source: str = field(default="<defaults>", compare=False)

    @property
    def angle(self) -> float | None:
        return None if self.angle_deg is None else math.radians(self.angle_deg)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            max_iterations=self.max_iterations,
            primal_tol=self.primal_tol,
            dual_tol=self.dual_tol,
            gap_tol=self.gap_tol,
            rho=self.solver_rho,
            relaxation=self.relaxation,
            method=self.solver_method,
        )

    @property
    def sweep_cells(self) -> list[tuple[float, float | None, tuple[int, ...]]]:
        """Grid cells in lexicographic order (epsilon_raw, angle_deg, counts)."""
        eps = self.sweep_epsilon_raw or (self.epsilon_raw,)
        angles = self.sweep_angle_deg or (self.angle_deg,)
        counts = tuple((c,) * len(self.dims) for c in self.sweep_counts) or (self.counts,)
        return [(e, a, c) for e in eps for a in angles for c in counts]

    def solves_per_cell(self) -> int:
        """Upper estimate of l1 solves one pipeline run performs."""
        total = 0
        if "recovery" in self.checks or "support" in self.checks or "lemma3" in self.checks:
            total += max(self.trials, self.lemma3_trials if "lemma3" in self.checks else 0)
        if "nsp" in self.checks:
            total += 2 * self.nsp_samples
        if "lemma1" in self.checks:
            total += self.lemma1_instances
        return total

    def to_dict(self, execution: bool = True) -> dict:
        """Field values; ``execution=False`` drops settings that cannot change results."""
        out = {}
        for f in fields(self):
            if f.name == "source" or (not execution and f.name in EXECUTION_FIELDS):
                continue
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def validate(self) -> "ExperimentConfig":
        problems = []
        if len(self.dims) != len(self.counts):
            problems.append("[data] dims and counts must have the same length")
        if any(d < 1 or d > self.ambient_dim for d in self.dims):
            problems.append("[data] every dim must lie in [1, ambient_dim]")
        if any(c < 1 for c in self.counts):
            problems.append("[data] counts must be positive")
        if self.angle_deg is not None and not 0 < self.angle_deg <= 90:
            problems.append("[data] angle_deg must lie in (0, 90]")
        if self.angle_deg is not None and sum(self.dims) > self.ambient_dim:
            problems.append("[data] angle control needs sum(dims) <= ambient_dim")
        if self.epsilon_raw < 0 or self.rho < 0:
            problems.append("[data] epsilon_raw and rho must be nonnegative")
        for name in ("trials", "nsp_samples", "lemma1_instances", "lemma2_trials", "lemma3_trials", "appendix_trials", "jobs"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.inradius_method not in ("auto", "exact_vertex_enum", "grid_refine", "lp_box_bound"):
            problems.append(f"[bounds] unknown inradius_method {self.inradius_method!r}")
        if self.encoding not in ("text", "f64le"):
            problems.append("[output] encoding must be text or f64le")
        try:
            self.solver_options()
        except ValueError as exc:
            problems.append(f"[solver] {exc}")
        if problems:
            raise ConfigError(f"{self.source}: " + "; ".join(problems))
        return self


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"\[([^\]]+)\]", stripped)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", stripped):
            return lineno
    return None


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}:{_line_of(text, section, None)}: unknown section [{section}]")
        for key, raw in parser.items(section):
            line = _line_of(text, section, key)
            if key not in SCHEMA[section]:
                known = ", ".join(SCHEMA[section])
                raise ConfigError(f"{source}:{line}: unknown key '{key}' in [{section}] (known: {known})")
            attr, conv = SCHEMA[section][key]
            try:
                values[attr] = conv(raw)
            except (ValueError, TypeError) as exc:
                kind = getattr(conv, "__name__", "value").strip("_")
                raise ConfigError(f"{source}:{line}: [{section}] {key} = {raw!r}: expected {kind} ({exc})") from None
    return ExperimentConfig(source=source, **values).validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    changes = {k: v for k, v in changes.items() if v is not None}
    return replace(cfg, **changes).validate() if changes else cfg
