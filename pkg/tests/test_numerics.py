import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsl.numerics import RngStream, SolveError, rng_uniform, spd_solve


def test_identity_system():
    np.testing.assert_allclose(spd_solve(np.eye(2), [3.0, 5.0]), [3.0, 5.0])


def test_diagonal_system():
    np.testing.assert_allclose(spd_solve(np.diag([2.0, 4.0]), [2.0, 4.0]), [1.0, 1.0])


def test_singular_with_damping():
    # (A + I) = [[2, 1], [1, 2]], inverse (1/3)[[2, -1], [-1, 2]]
    x = spd_solve(np.ones((2, 2)), [1.0, 1.0], damping=1.0)
    np.testing.assert_allclose(x, [1 / 3, 1 / 3], rtol=1e-14)


def test_singular_without_damping_fails():
    with pytest.raises(SolveError):
        spd_solve(np.ones((2, 2)), [1.0, 1.0])


def test_bad_shapes():
    with pytest.raises(ValueError):
        spd_solve(np.ones((2, 3)), [1.0, 1.0])
    with pytest.raises(ValueError):
        spd_solve(np.eye(2), [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        spd_solve(np.eye(2), [1.0, 1.0], damping=-1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_spd_solve_residual(n, seed):
    g = np.random.default_rng(seed)
    B = g.normal(size=(n + 3, n))
    A = B.T @ B + 0.1 * np.eye(n)
    b = g.normal(size=n)
    x = spd_solve(A, b)
    np.testing.assert_allclose(A @ x, b, atol=1e-9 * (1 + np.abs(b).max()))


def test_stream_determinism():
    a = rng_uniform(RngStream(7, 3), 50)
    b = rng_uniform(RngStream(7, 3), 50)
    assert np.array_equal(a, b)
    c = rng_uniform(RngStream(7, 4), 50)
    assert not np.array_equal(a, c)


def test_spawn_is_independent_of_parent_state():
    s = RngStream(5)
    first = s.spawn(2).uniform(10)
    s.uniform(1000)
    assert np.array_equal(first, s.spawn(2).uniform(10))
    assert not np.array_equal(s.spawn(1).uniform(10), s.spawn(2).uniform(10))


def test_uniform_range():
    v = rng_uniform(RngStream(0), 10_000, 0.0, 1.0)
    assert v.min() >= 0.0 and v.max() < 1.0


def test_uniform_mean():
    v = rng_uniform(RngStream(1), 100_000, 0.0, 1.0)
    assert abs(v.mean() - 0.5) < 0.01


def test_uniform_shape_and_bounds():
    v = rng_uniform(RngStream(2), (1000, 2), [0.0, -3.0], [1.0, -2.0])
    assert v.shape == (1000, 2)
    assert np.all(v[:, 1] >= -3.0) and np.all(v[:, 1] < -2.0)
