import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subsparse.datagen import (
    NoiseParams,
    assemble,
    gen_noise,
    gen_points,
    gen_query,
    gen_subspaces,
    generate,
    stream,
)
from subsparse.exceptions import DimensionError, ParameterError
from subsparse.geometry import principal_angles, project


def test_noise_params_epsilon():
    p = NoiseParams(0.1, 0.1)
    assert p.epsilon == 0.1 * 1.1
    with pytest.raises(ParameterError):
        NoiseParams(-1.0)


def test_orthogonal_construction():
    S1, S2 = gen_subspaces(4, [2, 2], seed=1, angle=math.pi / 2)
    np.testing.assert_allclose(principal_angles(S1, S2), [math.pi / 2] * 2, atol=1e-9)


@given(st.floats(0.01, math.pi / 2), st.integers(0, 2**32 - 1))
def test_requested_angle_is_exact(theta, seed):
    S1, S2, S3 = gen_subspaces(9, [2, 3, 2], seed, angle=theta)
    assert principal_angles(S1, S2)[0] == pytest.approx(theta, abs=1e-7)
    assert math.cos(principal_angles(S1, S3)[0]) == pytest.approx(math.cos(theta), abs=1e-12)


def test_angle_pi_over_six():
    S1, S2 = gen_subspaces(4, [2, 2], seed=3, angle=math.pi / 6)
    assert principal_angles(S1, S2)[0] == pytest.approx(math.pi / 6, abs=1e-9)


def test_subspace_errors():
    with pytest.raises(DimensionError):
        gen_subspaces(4, [3, 2], seed=0, angle=0.5)
    with pytest.raises(DimensionError):
        gen_subspaces(4, [5], seed=0)
    with pytest.raises(DimensionError):
        gen_subspaces(4, [2, 2], seed=0, angle=2.0)


def test_seed_determinism():
    a = gen_subspaces(6, [2, 3], seed=42)
    b = gen_subspaces(6, [2, 3], seed=42)
    for Sa, Sb in zip(a, b):
        np.testing.assert_array_equal(Sa.basis, Sb.basis)
    Sa = a[0]
    np.testing.assert_array_equal(gen_points(Sa, 10, 5), gen_points(Sa, 10, 5))


def test_points_unit_norm_and_in_subspace():
    S = gen_subspaces(10, [3], seed=0)[0]
    X = gen_points(S, 500, seed=1)
    np.testing.assert_allclose(np.linalg.norm(X, axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(project(S, X), X, atol=1e-12)


def test_one_dimensional_points_are_plus_minus_basis():
    S = gen_subspaces(5, [1], seed=0)[0]
    X = gen_points(S, 50, seed=2)
    dots = S.basis[:, 0] @ X
    np.testing.assert_allclose(np.abs(dots), 1.0, atol=1e-12)


def test_points_mean_near_zero():
    S = gen_subspaces(6, [2], seed=0)[0]
    X = gen_points(S, 10_000, seed=3)
    assert np.linalg.norm(X.mean(axis=1)) <= 0.05


def test_unnormalized_points():
    S = gen_subspaces(6, [2], seed=0)[0]
    X = gen_points(S, 200, seed=3, normalize=False)
    assert np.std(np.linalg.norm(X, axis=0)) > 0.1
    with pytest.raises(ParameterError):
        gen_points(S, 0, seed=0)


def test_noise_zero_and_variance():
    assert not np.any(gen_noise(5, 7, NoiseParams(0.0), seed=0))
    Z = gen_noise(100, 10_000, NoiseParams(0.1), seed=0)
    assert Z.var() == pytest.approx(1e-4, rel=0.05)


def test_noise_norm_tail_below_chi2_bound():
    params = NoiseParams(0.1, 0.1)
    Z = gen_noise(100, 10_000, params, seed=4)
    frac = np.mean(np.linalg.norm(Z, axis=0) > params.epsilon)
    assert frac <= math.exp(-0.917)


def test_assemble_identity_and_reversal():
    S1, S2 = gen_subspaces(4, [2, 2], seed=0, angle=math.pi / 2)
    P1, P2 = gen_points(S1, 2, 0, 0), gen_points(S2, 2, 0, 1)
    Z = np.zeros((4, 4))
    ds = assemble([S1, S2], [P1, P2], Z)
    np.testing.assert_array_equal(ds.X, np.hstack([P1, P2]))
    np.testing.assert_array_equal(ds.labels, [0, 0, 1, 1])
    rev = assemble([S1, S2], [P1, P2], Z, permutation=[3, 2, 1, 0])
    np.testing.assert_array_equal(rev.labels, [1, 1, 0, 0])
    with pytest.raises(DimensionError):
        assemble([S1, S2], [P1, P2], Z, permutation=[0, 0, 1, 2])
    with pytest.raises(DimensionError):
        assemble([S1, S2], [P1, P2], np.zeros((4, 3)))


def test_dataset_invariants():
    ds = generate(12, [2, 3, 2], [10, 15, 8], NoiseParams(0.05), seed=9)
    assert np.array_equal(ds.Y, ds.X + ds.Z)
    np.testing.assert_allclose(np.linalg.norm(ds.X, axis=0), 1.0, atol=1e-12)
    for i, S in enumerate(ds.subspaces):
        P = ds.points(i)
        np.testing.assert_allclose(project(S, P), P, atol=1e-12)
    assert ds.counts == [10, 15, 8]
    # unpermute recovers block order
    block = ds.X[:, ds.block_order()]
    np.testing.assert_array_equal(block[:, ds.permutation], ds.X)
    np.testing.assert_array_equal(np.sort(ds.labels[ds.block_order()]), ds.labels[ds.block_order()])
    assert set(ds.others(1)) == set(range(33)) - set(ds.members(1))


def test_noise_stream_independent_of_points():
    a = generate(10, [2, 2], [8, 8], NoiseParams(0.01), seed=5)
    b = generate(10, [2, 2], [8, 8], NoiseParams(0.2), seed=5)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_allclose(b.Z, 20 * a.Z, rtol=1e-12)


def test_streams_are_distinct():
    x = stream(1, 2, 3).standard_normal(4)
    assert not np.array_equal(x, stream(1, 2, 4).standard_normal(4))
    assert not np.array_equal(x, stream(1, 3, 3).standard_normal(4))
    np.testing.assert_array_equal(x, stream(1, 2, 3).standard_normal(4))


def test_query_in_subspace_plus_noise():
    ds = generate(10, [2, 2], [8, 8], NoiseParams(0.1), seed=5)
    q = gen_query(ds, 1, seed=5, trial=3)
    assert q.label == 1
    assert np.linalg.norm(q.x) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(project(ds.subspaces[1], q.x), q.x, atol=1e-12)
    np.testing.assert_array_equal(q.y, q.x + q.z)
    q2 = gen_query(ds, 1, seed=5, trial=4)
    assert not np.array_equal(q.y, q2.y)
