"""Subspace geometry: projections, principal angles, incoherence and inradius.

All functions are pure; inputs are never modified.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.stats import norm, qmc

from .exceptions import (
    DimensionMismatch,
    EmptyInput,
    MethodUnavailable,
    PointsOutsideSubspace,
    RankDeficient,
)

EXACT = "exact_vertex_enum"
GRID = "grid_refine"
LP_BOX = "lp_box_bound"
METHODS = (EXACT, GRID, LP_BOX)

RANK_TOL = 1e-10
MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class Subspace:
    """Linear subspace of R^n stored as an n x d matrix with orthonormal columns."""

    basis: np.ndarray

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float)
        if basis.ndim != 2:
            raise DimensionMismatch("basis must be a 2-d array")
        n, d = basis.shape
        if not 1 <= d <= n:
            raise DimensionMismatch(f"need 1 <= dim <= ambient_dim, got dim={d}, n={n}")
        gram = basis.T @ basis
        if np.max(np.abs(gram - np.eye(d))) > 1e-12:
            raise ValueError("basis columns are not orthonormal within 1e-12")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def coordinates(self, points: np.ndarray) -> np.ndarray:
        """Coordinates of ``points`` (n x m) in this basis, shape (d, m)."""
        return self.basis.T @ points


@dataclass(frozen=True)
class InradiusBracket:
    lower: float
    upper: float
    method: str
    is_exact: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown inradius method {self.method!r}")
        if not 0.0 <= self.lower <= self.upper <= 1.0 + 1e-9:
            raise ValueError(f"invalid bracket [{self.lower}, {self.upper}]")
        if self.is_exact and self.upper - self.lower > 1e-9:
            raise ValueError("exact bracket must have width <= 1e-9")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "method": self.method,
            "is_exact": self.is_exact,
        }


@dataclass(frozen=True)
class SubspaceReport:
    inradius: InradiusBracket
    incoherence: float
    margin: float


@dataclass(frozen=True)
class GeometryReport:
    """Per-subspace inradius/incoherence/margin plus pairwise smallest angles.

    ``margin`` uses ``inradius.lower`` so that a positive margin certifies
    ``incoherence + noise_level < inradius``.
    """

    subspaces: tuple[SubspaceReport, ...]
    smallest_angles: np.ndarray
    noise_level: float
    notes: tuple[str, ...] = field(default=())

    @property
    def inradii(self) -> np.ndarray:
        return np.array([s.inradius.lower for s in self.subspaces])

    @property
    def incoherences(self) -> np.ndarray:
        return np.array([s.incoherence for s in self.subspaces])

    @property
    def margins(self) -> np.ndarray:
        return np.array([s.margin for s in self.subspaces])

    def to_dict(self) -> dict:
        return {
            "noise_level": self.noise_level,
            "subspaces": [
                {
                    "inradius": s.inradius.to_dict(),
                    "incoherence": s.incoherence,
                    "margin": s.margin,
                }
                for s in self.subspaces
            ],
            "smallest_angles": self.smallest_angles.tolist(),
            "notes": list(self.notes),
        }


def orthonormalize(raw_basis) -> Subspace:
    """Orthonormal basis for the column space of ``raw_basis``.

    Uses a QR factorization with the sign convention diag(R) > 0, so an
    already-orthonormal input is returned unchanged.
    """
    raw = np.atleast_2d(np.asarray(raw_basis, dtype=float))
    if raw.shape[1] > raw.shape[0]:
        raise RankDeficient(f"{raw.shape[1]} columns cannot be independent in R^{raw.shape[0]}")
    smallest = np.linalg.svd(raw, compute_uv=False)[-1]
    if smallest <= RANK_TOL:
        raise RankDeficient(f"smallest singular value {smallest:.3e} <= {RANK_TOL}")
    q, r = np.linalg.qr(raw)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    # One re-orthogonalization pass keeps the 1e-12 invariant for ill-conditioned input.
    q, r = np.linalg.qr(q)
    q = q * np.sign(np.diag(r))
    return Subspace(q)


def _check_vector(S: Subspace, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] != S.ambient_dim:
        raise DimensionMismatch(f"expected leading dimension {S.ambient_dim}, got {v.shape[0]}")
    return v


def project(S: Subspace, v) -> np.ndarray:
    """Orthogonal projection of ``v`` (a vector or n x m matrix) onto ``S``."""
    v = _check_vector(S, v)
    return S.basis @ (S.basis.T @ v)


def principal_angles(S1: Subspace, S2: Subspace) -> np.ndarray:
    """Principal angles in radians, smallest first (cosines nonincreasing)."""
    if S1.ambient_dim != S2.ambient_dim:
        raise DimensionMismatch("subspaces live in different ambient spaces")
    cosines = np.linalg.svd(S1.basis.T @ S2.basis, compute_uv=False)
    return np.arccos(np.clip(cosines, 0.0, 1.0))


def incoherence(S: Subspace, other_points) -> float:
    """Largest inner product between a unit vector of ``S`` and a foreign point.

    The maximum over unit ``x`` in ``S`` of ``|x^T w|`` is ``||P_S w||``, so the
    value is exact: the largest projection norm over the columns of
    ``other_points``.
    """
    W = _check_vector(S, other_points)
    if W.ndim == 1:
        W = W[:, None]
    if W.shape[1] == 0:
        raise EmptyInput("incoherence needs at least one point from another subspace")
    return float(np.max(np.linalg.norm(S.basis.T @ W, axis=0)))


def _validate_points(S: Subspace, points) -> np.ndarray:
    X = _check_vector(S, points)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] == 0:
        return S.coordinates(X)
    coords = S.coordinates(X)
    off = np.linalg.norm(X - S.basis @ coords, axis=0)
    if np.max(off) > MEMBERSHIP_TOL:
        raise PointsOutsideSubspace(f"a point lies {np.max(off):.3e} away from the subspace")
    norms = np.linalg.norm(X, axis=0)
    if np.max(np.abs(norms - 1.0)) > MEMBERSHIP_TOL:
        raise PointsOutsideSubspace("points must have unit norm within 1e-9")
    return coords


def support_function(coords: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """``max_j |v^T a_j|`` for each direction (rows of ``directions``)."""
    return np.max(np.abs(directions @ coords), axis=1)


def _inradius_exact(coords: np.ndarray, chunk: int = 4096) -> float:
    d, N = coords.shape
    if d == 1:
        return float(np.max(np.abs(coords)))
    A = coords.T  # (N, d): polar polytope is {w : |A w| <= 1}
    # Fix the first sign: w and -w are both vertices with the same norm.
    signs = np.array([(1.0,) + s for s in itertools.product((1.0, -1.0), repeat=d - 1)]).T
    best = 0.0
    combos = itertools.combinations(range(N), d)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=int)
        if block.size == 0:
            break
        M = A[block]  # (K, d, d)
        det = np.abs(np.linalg.det(M))
        M = M[det > 1e-12]
        if M.shape[0] == 0:
            continue
        W = np.linalg.solve(M, np.broadcast_to(signs, (M.shape[0],) + signs.shape))
        slack = np.max(np.abs(np.einsum("nd,kds->kns", A, W)), axis=1)  # (K, s)
        feasible = slack <= 1.0 + 1e-9
        if np.any(feasible):
            norms = np.linalg.norm(W, axis=1)
            best = max(best, float(np.max(norms[feasible])))
    return 1.0 / best


def _lp_box_lower(coords: np.ndarray) -> float:
    d, N = coords.shape
    A = coords.T
    A_ub = np.vstack([A, -A])
    b_ub = np.ones(2 * N)
    radius = 0.0
    for k in range(d):
        for sgn in (1.0, -1.0):
            c = np.zeros(d)
            c[k] = -sgn
            res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * d, method="highs")
            if res.status == 3:  # unbounded: polar polytope is not bounded
                return 0.0
            if res.status != 0:
                raise RuntimeError(f"box LP failed: {res.message}")
            radius = max(radius, -res.fun)
    return 1.0 / (math.sqrt(d) * radius)


def _sphere_directions(d: int, density: int, max_directions: int) -> tuple[np.ndarray, float | None]:
    """Deterministic direction set on the unit sphere of R^d.

    Returns the directions (rows) and, when known, the covering angle of the
    set (the largest angle from any unit vector to the nearest direction up
    to sign).
    """
    if d == 2:
        theta = (np.arange(density) + 0.5) * (math.pi / density)
        return np.column_stack([np.cos(theta), np.sin(theta)]), math.pi / (2 * density)
    count = int(min(density ** (d - 1), max_directions))
    sampler = qmc.Sobol(d, scramble=True, seed=0x5EED)
    u = sampler.random(1 << max(1, math.ceil(math.log2(count))))[:count]
    g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True), None


def _refine(coords, v, window, passes, points_per_axis=21):
    d = coords.shape[0]
    best_v = v
    best_h = float(support_function(coords, v[None, :])[0])
    offsets_1d = np.linspace(-1.0, 1.0, points_per_axis)
    for _ in range(passes):
        # Orthonormal tangent frame at best_v.
        q, _ = np.linalg.qr(np.column_stack([best_v, np.eye(d)]))
        tangent = q[:, 1:d]
        mesh = np.array(list(itertools.product(offsets_1d, repeat=d - 1))) * window
        cand = best_v[None, :] + mesh @ tangent.T
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        h = support_function(coords, cand)
        k = int(np.argmin(h))
        if h[k] < best_h:
            best_h, best_v = float(h[k]), cand[k]
        window /= 10.0
    return best_v, best_h


def _inradius_grid(coords, density, passes, max_directions, top_k=4) -> tuple[float, float]:
    d = coords.shape[0]
    directions, cover = _sphere_directions(d, density, max_directions)
    h = np.concatenate(
        [support_function(coords, directions[i : i + 65536]) for i in range(0, len(directions), 65536)]
    )
    upper = float(np.min(h))
    spacing = math.pi / density
    for k in np.argsort(h)[:top_k]:
        _, hk = _refine(coords, directions[k], spacing, passes)
        upper = min(upper, hk)
    lower = _lp_box_lower(coords)
    if cover is not None:
        # h is Lipschitz with constant max ||a_j|| on the sphere.
        lip = float(np.max(np.linalg.norm(coords, axis=0)))
        lower = max(lower, float(np.min(h)) - lip * 2.0 * math.sin(cover / 2.0))
    return min(lower, upper), upper


def inradius(
    S: Subspace,
    points,
    method: str | None = None,
    *,
    grid_density: int = 720,
    refine_passes: int = 3,
    max_directions: int = 1 << 18,
) -> InradiusBracket:
    """Bracket the inradius of the symmetrized convex hull of ``points`` within ``S``.

    The inradius equals ``min_{|v|=1} max_j |v^T a_j|`` where ``a_j`` are the
    in-subspace coordinates, and also ``1 / circumradius`` of the polar
    polytope ``{w : |a_j^T w| <= 1}``.

    Parameters
    ----------
    S : Subspace
    points : ndarray, shape (n, N_i)
        Unit-norm columns lying in ``S``.
    method : {"exact_vertex_enum", "grid_refine", "lp_box_bound"}, optional
        Defaults to exact enumeration for ``dim <= 3`` and ``grid_refine``
        otherwise.
    """
    d = S.dim
    if method is None:
        method = EXACT if d <= 3 else GRID
    if method not in METHODS:
        raise MethodUnavailable(f"unknown method {method!r}")
    if method == EXACT and d > 3:
        raise MethodUnavailable("exact vertex enumeration is limited to dim <= 3")
    coords = _validate_points(S, points)
    if coords.shape[1] < d or np.linalg.matrix_rank(coords, tol=RANK_TOL) < d:
        return InradiusBracket(0.0, 0.0, method, is_exact=True)
    if method == EXACT:
        r = min(_inradius_exact(coords), 1.0)
        return InradiusBracket(r, r, EXACT, is_exact=True)
    if method == GRID:
        lower, upper = _inradius_grid(coords, grid_density, refine_passes, max_directions)
        return InradiusBracket(lower, min(upper, 1.0), GRID)
    lower = _lp_box_lower(coords)
    upper = float(np.min(np.linalg.norm(coords, axis=0))) if d == 1 else 1.0
    return InradiusBracket(min(lower, upper), upper, LP_BOX)


def recovery_margin(subspaces, points, noise_level: float, method: str | None = None, **inradius_kw) -> GeometryReport:
    """Inradius, incoherence and margin ``r_i - (mu_i + eps)`` for every subspace.

    ``points[i]`` holds the noise-free points of subspace ``i``. With a single
    subspace the incoherence is defined as 0.
    """
    L = len(subspaces)
    if len(points) != L:
        raise DimensionMismatch("need one point matrix per subspace")
    reports = []
    notes = []
    for i, S in enumerate(subspaces):
        bracket = inradius(S, points[i], method, **inradius_kw)
        if L == 1:
            mu = 0.0
        else:
            others = np.hstack([np.atleast_2d(points[j]) for j in range(L) if j != i])
            mu = incoherence(S, others)
        reports.append(SubspaceReport(bracket, mu, bracket.lower - (mu + noise_level)))
        if not bracket.is_exact:
            notes.append(f"subspace {i}: inradius bracketed by {bracket.method}; margins and gamma use the lower bound")
    angles = np.zeros((L, L))
    for i, j in itertools.combinations(range(L), 2):
        angles[i, j] = angles[j, i] = principal_angles(subspaces[i], subspaces[j])[0]
    return GeometryReport(tuple(reports), angles, float(noise_level), tuple(notes))
