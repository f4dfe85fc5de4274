"""Seeded synthesis of noisy union-of-subspaces data.

Every random draw comes from its own stream. A stream is a Philox
(counter-based) generator keyed by ``SeedSequence([seed, stream_id, *index])``,
so changing one parameter (say the noise level) never perturbs the draws of
another stream (say the noise-free points).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError, ParameterError
from .geometry import Subspace, orthonormalize

# Stream identifiers; fixed per release.
STREAM_SUBSPACES = 0x51
STREAM_POINTS = 0x9A
STREAM_NOISE = 0xC3
STREAM_PERMUTATION = 0xE7
STREAM_QUERY = 0x2F
STREAM_QUERY_NOISE = 0x4B
STREAM_W = 0x6D
STREAM_TRIAL = 0x85

MASK64 = (1 << 64) - 1


def stream(seed: int, stream_id: int, *index: int) -> np.random.Generator:
    """Independent generator for ``(seed, stream_id, *index)``."""
    words = [int(seed) & MASK64, int(stream_id), *(int(i) for i in index)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


@dataclass(frozen=True)
class NoiseParams:
    """Noise model: entries ~ N(0, epsilon_raw^2 / n); ``epsilon = epsilon_raw (1 + rho)``."""

    epsilon_raw: float
    rho: float = 0.1

    def __post_init__(self):
        if self.epsilon_raw < 0 or self.rho < 0:
            raise ParameterError("epsilon_raw and rho must be nonnegative")

    @property
    def epsilon(self) -> float:
        return self.epsilon_raw * (1.0 + self.rho)

    def to_dict(self) -> dict:
        return {"epsilon_raw": self.epsilon_raw, "rho": self.rho, "epsilon": self.epsilon}


@dataclass(frozen=True, eq=False)
class Dataset:
    """Noisy dictionary ``Y = X + Z`` whose columns are in permuted order.

    ``permutation[j]`` is the block-order index of column ``j``, i.e.
    ``X == X_block[:, permutation]`` where ``X_block = [X_1 ... X_L]``.
    """

    subspaces: tuple[Subspace, ...]
    X: np.ndarray
    Z: np.ndarray
    Y: np.ndarray
    labels: np.ndarray
    permutation: np.ndarray
    noise: NoiseParams
    seed: int = 0
    uniform_points: bool = True
    _members: tuple = field(default=(), repr=False)

    def __post_init__(self):
        L = len(self.subspaces)
        object.__setattr__(
            self, "_members", tuple(np.flatnonzero(self.labels == i) for i in range(L))
        )

    @property
    def ambient_dim(self) -> int:
        return self.X.shape[0]

    @property
    def n_subspaces(self) -> int:
        return len(self.subspaces)

    @property
    def counts(self) -> list[int]:
        return [len(m) for m in self._members]

    @property
    def epsilon(self) -> float:
        return self.noise.epsilon

    def members(self, i: int) -> np.ndarray:
        """Column indices (in dictionary order) of the points of subspace ``i``."""
        return self._members[i]

    def others(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.labels != i)

    def block_order(self) -> np.ndarray:
        """Column order that undoes the permutation."""
        return np.argsort(self.permutation, kind="stable")

    def points(self, i: int) -> np.ndarray:
        return self.X[:, self._members[i]]


def gen_subspaces(n: int, dims, seed: int, angle: float | None = None) -> list[Subspace]:
    """Random subspaces of R^n with the given dimensions.

    Without ``angle`` each basis is an orthonormalized Gaussian matrix (a
    rotation-invariant draw). With ``angle`` (radians, in (0, pi/2]) the
    subspaces are built from one random orthonormal frame so that the
    smallest principal angle between subspace 0 and every other subspace is
    exactly ``angle``; all other directions are mutually orthogonal. This
    needs ``sum(dims) <= n``.
    """
    dims = [int(d) for d in dims]
    if any(d < 1 or d > n for d in dims):
        raise DimensionError(f"each dimension must be in [1, {n}], got {dims}")
    rng = stream(seed, STREAM_SUBSPACES)
    if angle is None:
        return [orthonormalize(rng.standard_normal((n, d))) for d in dims]
    if not 0.0 < angle <= math.pi / 2:
        raise DimensionError("angle must lie in (0, pi/2]")
    if sum(dims) > n:
        raise DimensionError(f"angle control needs sum(dims) <= n, got {sum(dims)} > {n}")
    Q = orthonormalize(rng.standard_normal((n, sum(dims)))).basis
    out = [Subspace(Q[:, : dims[0]])]
    shared = Q[:, 0]
    col = dims[0]
    for d in dims[1:]:
        fresh = Q[:, col : col + d]
        first = math.cos(angle) * shared + math.sin(angle) * fresh[:, 0]
        out.append(orthonormalize(np.column_stack([first, fresh[:, 1:]])))
        col += d
    return out


def gen_points(S: Subspace, count: int, seed: int, index: int = 0, normalize: bool = True) -> np.ndarray:
    """``count`` points uniform on the unit sphere of ``S``, shape (n, count).

    ``normalize=False`` keeps the raw Gaussian coefficients (stress tests only).
    """
    if count < 1:
        raise ParameterError("count must be >= 1")
    g = stream(seed, STREAM_POINTS, index).standard_normal((S.dim, count))
    if normalize:
        g /= np.linalg.norm(g, axis=0)
    X = S.basis @ g
    if normalize:
        # Renormalize in the ambient space so the unit-norm invariant holds to 1e-12.
        X /= np.linalg.norm(X, axis=0)
    return X


def gen_noise(n: int, count: int, params: NoiseParams, seed: int, stream_id: int = STREAM_NOISE, index: int = 0) -> np.ndarray:
    """Gaussian noise with i.i.d. N(0, epsilon_raw^2 / n) entries, shape (n, count)."""
    g = stream(seed, stream_id, index).standard_normal((n, count))
    return g * (params.epsilon_raw / math.sqrt(n))


def assemble(subspaces, points, noise, permutation=None, permutation_seed: int | None = None, *, noise_params=None, seed=0, uniform_points=True) -> Dataset:
    """Stack per-subspace points into a permuted dictionary.

    Parameters
    ----------
    subspaces : sequence of Subspace
    points : sequence of ndarray
        ``points[i]`` has shape (n, N_i).
    noise : ndarray, shape (n, N)
        Noise in block order (same column order as ``hstack(points)``).
    permutation : array of int, optional
        Explicit permutation; ``permutation[j]`` is the block index placed at
        column ``j``. Takes precedence over ``permutation_seed``.
    permutation_seed : int, optional
        Seed for a random permutation. Identity when both are omitted.
    """
    if len(points) != len(subspaces):
        raise DimensionError("need one point matrix per subspace")
    n = subspaces[0].ambient_dim
    for P in points:
        if P.shape[0] != n:
            raise DimensionError("points and subspaces disagree on the ambient dimension")
    X_block = np.hstack(points)
    N = X_block.shape[1]
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (n, N):
        raise DimensionError(f"noise must have shape {(n, N)}, got {noise.shape}")
    block_labels = np.concatenate([np.full(P.shape[1], i) for i, P in enumerate(points)])
    if permutation is not None:
        perm = np.asarray(permutation, dtype=int)
        if sorted(perm.tolist()) != list(range(N)):
            raise DimensionError("permutation is not a permutation of the columns")
    elif permutation_seed is not None:
        perm = stream(permutation_seed, STREAM_PERMUTATION).permutation(N)
    else:
        perm = np.arange(N)
    X = X_block[:, perm]
    Z = noise[:, perm]
    return Dataset(
        subspaces=tuple(subspaces),
        X=X,
        Z=Z,
        Y=X + Z,
        labels=block_labels[perm],
        permutation=perm,
        noise=noise_params if noise_params is not None else NoiseParams(0.0),
        seed=int(seed),
        uniform_points=uniform_points,
    )


def generate(n: int, dims, counts, noise: NoiseParams, seed: int, angle: float | None = None, normalize: bool = True, permute: bool = True) -> Dataset:
    """Full synthesis: subspaces, points, noise and a random permutation."""
    if len(dims) != len(counts):
        raise DimensionError("dims and counts must have equal length")
    subspaces = gen_subspaces(n, dims, seed, angle)
    points = [gen_points(S, int(c), seed, index=i, normalize=normalize) for i, (S, c) in enumerate(zip(subspaces, counts))]
    Z = gen_noise(n, int(sum(counts)), noise, seed)
    return assemble(
        subspaces,
        points,
        Z,
        permutation_seed=seed if permute else None,
        noise_params=noise,
        seed=seed,
        uniform_points=normalize,
    )


@dataclass(frozen=True)
class Query:
    """Noisy query ``y = x + z`` with ``x`` a unit vector of subspace ``label``."""

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    label: int


def gen_query(dataset: Dataset, label: int, seed: int, trial: int) -> Query:
    """Fresh query point for subspace ``label``; independent of the dictionary draws."""
    S = dataset.subspaces[label]
    g = stream(seed, STREAM_QUERY, label, trial).standard_normal(S.dim)
    x = S.basis @ (g / np.linalg.norm(g))
    x /= np.linalg.norm(x)
    z = gen_noise(dataset.ambient_dim, 1, dataset.noise, seed, STREAM_QUERY_NOISE, trial * 1024 + label)[:, 0]
    return Query(x + z, x, z, label)
