"""Executable checks of the recovery bounds on concrete instances.

Logarithms are natural throughout. Inradii enter every formula through the
lower end of their bracket, which makes ``gamma`` larger (a looser, safer
tolerance) and margins smaller (a conservative certificate).

Probabilistic statements "holds with probability at least p" are checked in
aggregate: the empirical failure fraction over T trials must not exceed
``(1 - p) + 3 sqrt(p (1 - p) / T)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import datagen
from .datagen import Dataset, Query
from .exceptions import (
    HypothesisNotMet,
    NecessaryConditionViolated,
    ParameterError,
    ZeroInradius,
)
from .geometry import GeometryReport, Subspace, inradius
from .solver import SolverOptions, solve_constrained_l1, solve_equality_l1

SLACK = 1e-6
DEFAULT_DELTA = 1e-3
LOG_BASE = "e"


def bernoulli_threshold(failure_probability: float, trials: int) -> float:
    """Largest acceptable empirical failure fraction for a bound of the given failure probability."""
    q = min(max(failure_probability, 0.0), 1.0)
    return q + 3.0 * math.sqrt(q * (1.0 - q) / trials)


@dataclass(frozen=True)
class Aggregate:
    name: str
    trials: int
    failures: int
    failure_probability: float

    @property
    def fraction(self) -> float:
        return self.failures / self.trials if self.trials else 0.0

    @property
    def threshold(self) -> float:
        return bernoulli_threshold(self.failure_probability, self.trials)

    @property
    def passed(self) -> bool:
        return self.trials > 0 and self.fraction <= self.threshold

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "trials": self.trials,
            "failures": self.failures,
            "fraction": self.fraction,
            "failure_probability": self.failure_probability,
            "threshold": self.threshold,
            "passed": self.passed,
        }


# ---------------------------------------------------------------------------
# gamma and beta


def gamma_term(count: int, n: int, r: float) -> float:
    """``2 (1 + 2 sqrt(2 (ln N_i + ln n)) / r_i)``."""
    if r <= 0:
        raise ZeroInradius("inradius must be positive to evaluate gamma")
    return 2.0 * (1.0 + 2.0 * math.sqrt(2.0 * (math.log(count) + math.log(n))) / r)


def _inradii(geometry) -> np.ndarray:
    if isinstance(geometry, GeometryReport):
        return geometry.inradii
    return np.asarray(geometry, dtype=float)


def compute_gamma(geometry, counts: Sequence[int], n: int) -> tuple[np.ndarray, float, int]:
    """Per-subspace gamma terms, their maximum, and the maximizing index.

    ``geometry`` is a :class:`GeometryReport` or a sequence of inradii.
    """
    r = _inradii(geometry)
    if len(r) != len(counts):
        raise ParameterError("need one count per subspace")
    if np.any(r <= 0):
        raise ZeroInradius(f"zero inradius for subspace(s) {np.flatnonzero(r <= 0).tolist()}")
    terms = np.array([gamma_term(c, n, ri) for c, ri in zip(counts, r)])
    k = int(np.argmax(terms))
    return terms, float(terms[k]), k


def compute_beta(geometry, gamma: float, epsilon: float, delta: float = DEFAULT_DELTA, incoherences=None) -> tuple[float, int]:
    """``(1 + max_i 3 r_i / (r_i - (mu_i + eps))) gamma / 2 + delta`` and its maximizing index.

    Raises
    ------
    NecessaryConditionViolated
        If some margin ``r_i - (mu_i + eps)`` is not positive.
    """
    if isinstance(geometry, GeometryReport):
        r, mu = geometry.inradii, geometry.incoherences
    else:
        r, mu = np.asarray(geometry, float), np.asarray(incoherences, float)
    margins = r - (mu + epsilon)
    if np.any(margins <= 0):
        bad = np.flatnonzero(margins <= 0).tolist()
        raise NecessaryConditionViolated(
            f"inradius <= incoherence + noise level for subspace(s) {bad}", margins.tolist()
        )
    ratios = 3.0 * r / margins
    k = int(np.argmax(ratios))
    return (1.0 + float(ratios[k])) * gamma / 2.0 + delta, k


@dataclass(frozen=True)
class BoundParams:
    gamma: float
    beta: float
    delta: float
    noise_level: float
    gamma_terms: tuple[float, ...]
    inradii: tuple[float, ...]
    incoherences: tuple[float, ...]
    inradius_exact: tuple[bool, ...]
    gamma_argmax: int = 0
    beta_argmax: int = 0

    @property
    def tau(self) -> float:
        return self.gamma * self.noise_level

    def noise_precondition(self, i: int) -> bool:
        """``eps <= gamma r_i / (2 beta + gamma)``."""
        return self.noise_level <= self.gamma * self.inradii[i] / (2 * self.beta + self.gamma)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "beta": self.beta,
            "delta": self.delta,
            "noise_level": self.noise_level,
            "gamma_terms": list(self.gamma_terms),
            "inradii": list(self.inradii),
            "incoherences": list(self.incoherences),
            "inradius_exact": list(self.inradius_exact),
            "gamma_argmax": self.gamma_argmax,
            "beta_argmax": self.beta_argmax,
            "log_base": LOG_BASE,
            "inradius_used": "lower",
        }


def compute_bounds(geometry: GeometryReport, counts, n: int, delta: float = DEFAULT_DELTA) -> BoundParams:
    terms, gamma, gk = compute_gamma(geometry, counts, n)
    beta, bk = compute_beta(geometry, gamma, geometry.noise_level, delta)
    return BoundParams(
        gamma=gamma,
        beta=beta,
        delta=delta,
        noise_level=geometry.noise_level,
        gamma_terms=tuple(terms.tolist()),
        inradii=tuple(geometry.inradii.tolist()),
        incoherences=tuple(geometry.incoherences.tolist()),
        inradius_exact=tuple(s.inradius.is_exact for s in geometry.subspaces),
        gamma_argmax=gk,
        beta_argmax=bk,
    )


# ---------------------------------------------------------------------------
# Recovery certificate (approximate reconstruction, off-support mass, support mass)


def support_lower_bound(beta: float, epsilon: float, count: int, dim: int, n: int) -> float:
    """Lower bound on ``||c_i*||_1`` for uniformly sampled points.

    ``(1 - (beta + 1) eps) / (2 sqrt(2 ln N_i / d_i) + 2 sqrt(2 ln N_i / n) eps)``
    """
    log_n = math.log(count)
    denom = 2.0 * math.sqrt(2.0 * log_n / dim) + 2.0 * math.sqrt(2.0 * log_n / n) * epsilon
    return (1.0 - (beta + 1.0) * epsilon) / denom


@dataclass(frozen=True)
class RecoveryCertificate:
    """Measured quantities of one solve next to their bounds.

    Flags are properties, so they are always consistent with the stored numbers.
    """

    query_index: int
    label: int
    in_support_residual: float
    residual_bound: float
    off_support_mass: float
    off_support_bound: float
    support_mass: float
    support_lower_bound: float
    noise_precondition_ok: bool
    objective: float = 0.0
    solver_status: str = "Optimal"
    duality_gap: float = 0.0

    @property
    def residual_ok(self) -> bool:
        return self.in_support_residual <= self.residual_bound + SLACK

    @property
    def off_support_ok(self) -> bool | None:
        """``None`` when the noise precondition fails (bound not applicable)."""
        if not self.noise_precondition_ok:
            return None
        return self.off_support_mass <= self.off_support_bound + SLACK

    @property
    def support_ok(self) -> bool | None:
        """``None`` when approximate reconstruction failed (hypothesis not met)."""
        if not self.residual_ok:
            return None
        return self.support_mass >= self.support_lower_bound - SLACK

    def to_dict(self) -> dict:
        return {
            "query_index": self.query_index,
            "label": self.label,
            "in_support_residual": self.in_support_residual,
            "residual_bound": self.residual_bound,
            "off_support_mass": self.off_support_mass,
            "off_support_bound": self.off_support_bound,
            "support_mass": self.support_mass,
            "support_lower_bound": self.support_lower_bound,
            "noise_precondition_ok": self.noise_precondition_ok,
            "objective": self.objective,
            "solver_status": self.solver_status,
            "duality_gap": self.duality_gap,
            "residual_ok": self.residual_ok,
            "off_support_ok": self.off_support_ok,
            "support_ok": self.support_ok,
        }


def check_recovery(dataset: Dataset, query: Query, bounds: BoundParams, opts: SolverOptions | None = None, query_index: int = 0):
    """Solve the constrained program with ``tau = gamma eps`` and measure both recovery bounds.

    Returns the certificate together with the solver result.
    """
    i = query.label
    eps = bounds.noise_level
    res = solve_constrained_l1(dataset.Y, query.y, bounds.tau, opts)
    own, other = dataset.members(i), dataset.others(i)
    c = res.coefficients
    r_i = bounds.inradii[i]
    cert = RecoveryCertificate(
        query_index=query_index,
        label=i,
        in_support_residual=float(np.linalg.norm(query.y - dataset.Y[:, own] @ c[own])),
        residual_bound=bounds.beta * eps,
        off_support_mass=float(np.sum(np.abs(c[other]))),
        off_support_bound=(2 * bounds.beta + bounds.gamma) * eps / (2 * r_i),
        support_mass=float(np.sum(np.abs(c[own]))),
        support_lower_bound=support_lower_bound(
            bounds.beta, eps, len(own), dataset.subspaces[i].dim, dataset.ambient_dim
        ),
        noise_precondition_ok=bounds.noise_precondition(i),
        objective=res.objective,
        solver_status=res.status.value,
        duality_gap=res.duality_gap,
    )
    return cert, res


def check_support_detection(dataset: Dataset, certificate: RecoveryCertificate) -> bool | None:
    """Support-mass lower bound; ``None`` when approximate reconstruction did not hold.

    Raises
    ------
    HypothesisNotMet
        If the dataset points were not sampled uniformly on the unit sphere.
    """
    if not dataset.uniform_points:
        raise HypothesisNotMet("support detection assumes uniformly sampled unit-norm points")
    return certificate.support_ok


# ---------------------------------------------------------------------------
# Null-space property on the admissible set W_i(beta, gamma, eps)


@dataclass(frozen=True)
class WSample:
    y_tilde: np.ndarray
    clean: np.ndarray
    noise: np.ndarray


def in_W(y_tilde, S: Subspace, beta: float, gamma: float, epsilon: float) -> bool:
    """Membership in ``{y + z : y in S, ||z|| <= gamma eps / 2, ||y + z|| >= beta eps}``.

    The smallest admissible ``z`` is the component of ``y_tilde`` orthogonal to ``S``.
    """
    y_tilde = np.asarray(y_tilde, dtype=float)
    perp = y_tilde - S.basis @ (S.basis.T @ y_tilde)
    return bool(
        np.linalg.norm(y_tilde) >= beta * epsilon and np.linalg.norm(perp) <= 0.5 * gamma * epsilon
    )


def sample_W(S: Subspace, bounds: BoundParams, epsilon: float, count: int, seed: int, spread: float = 1.0) -> list[WSample]:
    """Constructive samples of ``W_i(beta, gamma, eps)``.

    The clean part has norm ``(beta + gamma/2) eps (1 + u)`` with
    ``u ~ U[0, spread]`` and the noise part is uniform in the ball of radius
    ``gamma eps / 2``, so membership holds by the triangle inequality; it is
    re-checked anyway.
    """
    beta, gamma = bounds.beta, bounds.gamma
    if beta <= 0.5 * gamma:
        raise ParameterError("need beta > gamma / 2 for W to be nonempty")
    rng = datagen.stream(seed, datagen.STREAM_W)
    n = S.ambient_dim
    out = []
    for _ in range(count):
        g = rng.standard_normal(S.dim)
        x = S.basis @ (g / np.linalg.norm(g)) * (beta + 0.5 * gamma) * epsilon * (1.0 + spread * rng.uniform())
        h = rng.standard_normal(n)
        z = h / np.linalg.norm(h) * 0.5 * gamma * epsilon * rng.uniform() ** (1.0 / n)
        y_tilde = x + z
        if not in_W(y_tilde, S, beta, gamma, epsilon):
            # Rounding at the boundary only; shrink the noise part.
            z *= 1 - 1e-12
            y_tilde = x + z
        out.append(WSample(y_tilde, x, z))
    return out


@dataclass(frozen=True)
class NspSample:
    y_tilde: np.ndarray
    norm: float
    a_i_objective: float
    a_minus_i_objective: float

    @property
    def strict_holds(self) -> bool:
        return self.a_i_objective < self.a_minus_i_objective - SLACK

    def to_dict(self) -> dict:
        return {
            "norm": self.norm,
            "a_i_objective": self.a_i_objective,
            "a_minus_i_objective": self.a_minus_i_objective,
            "strict_holds": self.strict_holds,
        }


def check_nsp(dataset: Dataset, i: int, samples: Sequence[WSample], bounds: BoundParams, opts: SolverOptions | None = None) -> list[NspSample]:
    """Compare ``min ||a||_1`` over clean in-subspace atoms (tolerance gamma eps / 2)
    with ``min ||a||_1`` over noisy foreign atoms (tolerance gamma eps).

    An infeasible foreign program counts as objective ``inf``.
    """
    if dataset.n_subspaces < 2:
        raise ParameterError("the null-space property needs at least two subspaces")
    eps = bounds.noise_level
    X_i = dataset.X[:, dataset.members(i)]
    Y_rest = dataset.Y[:, dataset.others(i)]
    out = []
    for s in samples:
        a_i = solve_constrained_l1(X_i, s.y_tilde, 0.5 * bounds.gamma * eps, opts)
        a_rest = solve_constrained_l1(Y_rest, s.y_tilde, bounds.gamma * eps, opts)
        rest_obj = math.inf if a_rest.status.value == "Infeasible" else a_rest.objective
        out.append(NspSample(s.y_tilde, float(np.linalg.norm(s.y_tilde)), a_i.objective, rest_obj))
    return out


# ---------------------------------------------------------------------------
# Lemmas


@dataclass(frozen=True)
class BoundCheck:
    """``measured <= bound`` (with solver slack)."""

    measured: float
    bound: float
    note: str = ""

    @property
    def margin(self) -> float:
        return self.bound - self.measured

    @property
    def passed(self) -> bool:
        return self.measured <= self.bound + SLACK


def check_lemma1(S: Subspace, points, x, r: float | None = None, opts: SolverOptions | None = None) -> BoundCheck:
    """``min ||c||_1 s.t. x = X_i c`` is at most ``||x|| / r_i``.

    ``r`` defaults to the exact inradius (dim <= 3) or the lower end of the
    grid bracket, which keeps the inequality direction valid.
    """
    if r is None:
        bracket = inradius(S, points)
        r = bracket.lower
    res = solve_equality_l1(points, x, opts)
    xn = float(np.linalg.norm(x))
    bound = 0.0 if xn == 0 else (xn / r if r > 0 else math.inf)
    return BoundCheck(res.objective, bound)


def check_lemma2(Z_i, c_i, epsilon: float) -> BoundCheck:
    """``||Z_i c_i|| <= 2 eps sqrt(2 (ln N_i + ln n)) ||c_i||_1`` for one draw of ``Z_i``."""
    Z_i = np.asarray(Z_i, dtype=float)
    n, count = Z_i.shape
    lhs = float(np.linalg.norm(Z_i @ c_i))
    rhs = 2.0 * epsilon * math.sqrt(2.0 * (math.log(count) + math.log(n))) * float(np.sum(np.abs(c_i)))
    return BoundCheck(lhs, rhs)


def lemma2_failure_probability(count: int, n: int) -> float:
    return 1.0 / (n * count) ** 2


def check_lemma3(result_objective: float, bounds: BoundParams, label: int) -> BoundCheck:
    """``||c*||_1 <= 1 / r_i`` for a solution of the constrained program with ``tau = gamma eps``."""
    note = "" if bounds.inradius_exact[label] else "bound uses r_lower"
    return BoundCheck(result_objective, 1.0 / bounds.inradii[label], note)


# ---------------------------------------------------------------------------
# Concentration bounds for the noise model


def chi2_tail_bound(n: int, rho: float) -> float:
    """``P[||z|| > eps_raw (1 + rho)] <= exp(-n ((1+rho)^2 - sqrt(2 (1+rho)^2 - 1)) / 2)``."""
    a = (1.0 + rho) ** 2
    return math.exp(-n * (a - math.sqrt(2.0 * a - 1.0)) / 2.0)


def gaussian_max_threshold(count: int, sigma: float) -> float:
    """``2 sqrt(2 ln N) sigma``."""
    return 2.0 * math.sqrt(2.0 * math.log(count)) * sigma


@dataclass(frozen=True)
class AppendixReport:
    chi2: Aggregate
    chi2_bound: float
    inner_product: Aggregate
    inner_product_threshold: float
    notes: tuple[str, ...] = field(default=())

    @property
    def chi2_passed(self) -> bool:
        return self.chi2.fraction <= self.chi2_bound

    @property
    def passed(self) -> bool:
        return self.chi2_passed and self.inner_product.passed

    def to_dict(self) -> dict:
        return {
            "chi2": self.chi2.to_dict() | {"bound": self.chi2_bound, "passed": self.chi2_passed},
            "inner_product": self.inner_product.to_dict() | {"threshold_value": self.inner_product_threshold},
            "passed": self.passed,
        }


def check_appendix_bounds(n: int = 100, rho: float = 0.1, epsilon_raw: float = 0.1, count: int = 100, rows: int = 50, sigma: float = 0.1, trials: int = 10_000, seed: int = 0) -> AppendixReport:
    """Monte Carlo check of the noise-norm tail and the Gaussian inner-product bound.

    (a) fraction of ``z ~ N(0, eps_raw^2/n I_n)`` with ``||z|| > eps_raw (1 + rho)``
    against :func:`chi2_tail_bound`; (b) fraction of draws of ``A`` (rows x count,
    entries N(0, sigma^2)) with ``||A^T x||_inf > 2 sqrt(2 ln N) sigma`` for a
    fixed unit ``x``, against ``1 / N^2`` plus Bernoulli slack.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    rng = datagen.stream(seed, datagen.STREAM_TRIAL, 0xA1)
    z = rng.standard_normal((trials, n)) * (epsilon_raw / math.sqrt(n))
    exceed = int(np.sum(np.linalg.norm(z, axis=1) > epsilon_raw * (1.0 + rho)))
    chi2 = Aggregate("chi2_tail", trials, exceed, chi2_tail_bound(n, rho))

    rng = datagen.stream(seed, datagen.STREAM_TRIAL, 0xA7)
    x = rng.standard_normal(rows)
    x /= np.linalg.norm(x)
    threshold = gaussian_max_threshold(count, sigma)
    failures = 0
    batch = 500
    for start in range(0, trials, batch):
        m = min(batch, trials - start)
        A = rng.standard_normal((m, rows, count)) * sigma
        failures += int(np.sum(np.max(np.abs(np.einsum("trn,r->tn", A, x)), axis=1) > threshold))
    inner = Aggregate("gaussian_inner_product", trials, failures, 1.0 / count**2)
    return AppendixReport(chi2, chi2_tail_bound(n, rho), inner, threshold)
