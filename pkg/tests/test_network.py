import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsl.network import (ActivationKind, NetworkSpec, activation_eval, forward,
                         forward_and_jacobian, init_params, input_gradient, load_params,
                         param_jacobian, save_params)
from nsl.numerics import RngStream


def test_dof_count():
    assert NetworkSpec(3, (30, 30)).dof_count == 3 * 30 + 30 + 30 * 30 + 30 + 30 + 1 == 1081


def test_invalid_widths():
    with pytest.raises(ValueError):
        NetworkSpec(2, (10, 0))
    with pytest.raises(ValueError):
        NetworkSpec(0, (10,))
    with pytest.raises(ValueError):
        NetworkSpec(1, (4,), "relu")


def test_init_deterministic():
    spec = NetworkSpec(2, (8, 8), "sin")
    a = init_params(spec, RngStream(3, 1))
    b = init_params(spec, RngStream(3, 1))
    assert np.array_equal(a, b)
    assert a.shape == (spec.dof_count,)
    # biases start at zero
    for _, bs, _, _ in spec.slices():
        assert np.all(a[bs] == 0)


def test_constant_network():
    spec = NetworkSpec(2, (5,))
    theta = np.zeros(spec.dof_count)
    theta[-1] = 1.7
    X = np.random.default_rng(0).normal(size=(20, 2))
    np.testing.assert_array_equal(forward(spec, theta, X), 1.7)
    np.testing.assert_array_equal(input_gradient(spec, theta, X), 0.0)


def test_single_neuron_value():
    spec = NetworkSpec(1, (1,))
    # layout: W1, b1, W2, b2
    theta = np.array([1.0, 0.0, 2.0, 0.0])
    assert forward(spec, theta, [[0.5]])[0] == pytest.approx(2 * np.tanh(0.5), abs=1e-15)
    assert forward(spec, theta, [[0.5]])[0] == pytest.approx(0.924234, abs=1e-6)


def test_linear_model_jacobian_and_gradient():
    spec = NetworkSpec(1, ())
    theta = np.array([3.0, 1.0])  # slope then intercept
    J = param_jacobian(spec, theta, [[-1.0], [1.0]])
    np.testing.assert_array_equal(J, [[-1.0, 1.0], [1.0, 1.0]])
    g = input_gradient(spec, theta, np.linspace(-2, 2, 7)[:, None])
    np.testing.assert_array_equal(g, 3.0)


def test_regularized_hat():
    assert activation_eval("hat", 0.0) == 1.0
    assert activation_eval("hat", 100.0) == pytest.approx(np.exp(-12.0), abs=1e-10)
    # frozen from a 30-digit evaluation of exp(-12 tanh(1/2))
    assert activation_eval("hat", 1.0) == pytest.approx(3.905357747853434e-3, rel=1e-13)


def test_activation_parse():
    assert ActivationKind.parse("RegularizedHat") is ActivationKind.REGULARIZED_HAT
    assert ActivationKind.parse(ActivationKind.SIN) is ActivationKind.SIN


def _random_case(seed, act):
    g = np.random.default_rng(seed)
    d = int(g.integers(1, 4))
    layers = tuple(int(w) for w in g.integers(1, 6, size=int(g.integers(1, 3))))
    spec = NetworkSpec(d, layers, act)
    theta = g.normal(scale=0.8, size=spec.dof_count)
    X = g.normal(size=(6, d))
    return spec, theta, X


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-3)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["tanh", "sin", "hat"]))
def test_param_jacobian_matches_finite_differences(seed, act):
    spec, theta, X = _random_case(seed, act)
    _, J = forward_and_jacobian(spec, theta, X)
    h = 1e-6
    fd = np.empty_like(J)
    for i in range(spec.dof_count):
        e = np.zeros_like(theta)
        e[i] = h
        fd[:, i] = (forward(spec, theta + e, X) - forward(spec, theta - e, X)) / (2 * h)
    assert _rel(J, fd) < 1e-5


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["tanh", "sin", "hat"]))
def test_input_gradient_matches_finite_differences(seed, act):
    spec, theta, X = _random_case(seed, act)
    G = input_gradient(spec, theta, X)
    h = 1e-6
    fd = np.empty_like(G)
    for i in range(spec.input_dim):
        e = np.zeros(spec.input_dim)
        e[i] = h
        fd[:, i] = (forward(spec, theta, X + e) - forward(spec, theta, X - e)) / (2 * h)
    assert _rel(G, fd) < 1e-5


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_batch_permutation(seed):
    spec, theta, X = _random_case(seed, "tanh")
    perm = np.random.default_rng(seed).permutation(X.shape[0])
    u, J = forward_and_jacobian(spec, theta, X)
    up, Jp = forward_and_jacobian(spec, theta, X[perm])
    np.testing.assert_allclose(up, u[perm], rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(Jp, J[perm], rtol=1e-14, atol=1e-14)


def test_batch_shape_checked():
    spec = NetworkSpec(2, (3,))
    with pytest.raises(ValueError):
        forward(spec, np.zeros(spec.dof_count), np.zeros((4, 3)))
    with pytest.raises(ValueError):
        forward(spec, np.zeros(spec.dof_count + 1), np.zeros((4, 2)))


def test_checkpoint_roundtrip(tmp_path):
    spec = NetworkSpec(3, (7, 4), "sin")
    theta = init_params(spec, RngStream(11))
    path = tmp_path / "p.bin"
    save_params(path, spec, theta)
    spec2, theta2 = load_params(path)
    assert spec2 == spec
    assert np.array_equal(theta2, theta)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_params(path)
