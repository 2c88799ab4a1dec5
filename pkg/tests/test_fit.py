import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsl.characteristics import Domain
from nsl.fit import (AdamState, BoundaryCondition, FitConfig, FitError, Model, adam_step,
                     fisher_matrix, fit_least_squares, mse_loss, natural_grad_direction)
from nsl.network import NetworkSpec, forward, forward_and_jacobian, init_params
from nsl.numerics import RngStream
from nsl.sampling import ParamSpace, SampleBatch, uniform_sample


def frozen(X):
    batch = SampleBatch(np.asarray(X, dtype=float), np.zeros((len(X), 0)))
    return lambda theta, rng: batch


def test_mse_examples():
    assert mse_loss([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse_loss([2.0, 3.0], [1.0, 2.0]) == 1.0
    assert mse_loss([0.0, 2.0], [1.0, 1.0]) == 1.0
    with pytest.raises(ValueError):
        mse_loss([1.0], [1.0, 2.0])


def test_adam_zero_gradient():
    theta = np.array([1.0, -2.0])
    out, st_ = adam_step(AdamState.zeros(2), theta, np.zeros(2), 0.01)
    assert np.array_equal(out, theta) and st_.step == 1


def test_adam_first_step():
    out, _ = adam_step(AdamState.zeros(1), np.zeros(1), np.array([4.0]), 0.01)
    assert out[0] == pytest.approx(-0.01 * 4 / (4 + 1e-8), rel=1e-14)


def test_adam_deterministic_and_checked():
    g = np.array([0.3, -0.1])
    a = adam_step(AdamState.zeros(2), np.ones(2), g, 1e-3)[0]
    b = adam_step(AdamState.zeros(2), np.ones(2), g, 1e-3)[0]
    assert np.array_equal(a, b)
    with pytest.raises(FloatingPointError):
        adam_step(AdamState.zeros(2), np.ones(2), np.array([np.nan, 0.0]), 1e-3)


def test_natural_gradient_orthonormal_case():
    J = np.array([[1.0, -1.0], [1.0, 1.0]])
    G = fisher_matrix(J)
    np.testing.assert_allclose(G, np.eye(2))
    g = np.array([0.4, -0.7])
    np.testing.assert_allclose(natural_grad_direction(J, g, 0.0), g, rtol=1e-14)


def test_gauss_newton_linear_example():
    # model theta1 + theta2 x at x = -1, 1 with targets 0, 2; minimizer (1, 1)
    J = np.array([[1.0, -1.0], [1.0, 1.0]])
    y = np.array([0.0, 2.0])
    theta = np.zeros(2)
    g = J.T @ (J @ theta - y) / 2
    theta = theta - natural_grad_direction(J, g, 0.0)
    np.testing.assert_allclose(theta, [1.0, 1.0], atol=1e-14)


def test_heavy_damping_limit():
    g = np.random.default_rng(0).normal(size=5)
    J = np.random.default_rng(1).normal(size=(20, 5))
    eta = natural_grad_direction(J, g, 1e12)
    assert np.linalg.norm(eta) <= np.linalg.norm(g) / 1e12 * (1 + 1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6), st.integers(0, 12))
def test_gauss_newton_exact_for_linear_models(seed, n, extra):
    rng = np.random.default_rng(seed)
    K = n + 2 + extra
    J = rng.normal(size=(K, n))
    y = rng.normal(size=K)
    theta = rng.normal(size=n)
    g = J.T @ (J @ theta - y) / K
    step = theta - natural_grad_direction(J, g, 0.0)
    oracle = np.linalg.solve(J.T @ J, J.T @ y)
    assert np.max(np.abs(step - oracle)) < 1e-8 * (1 + np.max(np.abs(oracle)))


def test_one_fit_epoch_solves_affine_regression():
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(50, 3))
    y = X @ np.array([0.5, -2.0, 1.0]) + 0.3 + 0.01 * rng.normal(size=50)
    spec = NetworkSpec(3, ())
    cfg = FitConfig(1, 50, resample_each_epoch=False, natural_gradient=True, ng_damping=0.0)
    theta, _ = fit_least_squares(spec, rng.normal(size=4), lambda b: y, frozen(X), cfg)
    A = np.hstack([X, np.ones((50, 1))])
    np.testing.assert_allclose(theta, np.linalg.lstsq(A, y, rcond=None)[0], atol=1e-8)


def test_constant_target_fits_quickly():
    spec = NetworkSpec(2, (10,))
    X = np.random.default_rng(0).uniform(-1, 1, size=(200, 2))
    # start from a constant network: zero output weights make the first step a linear solve
    theta0 = init_params(spec, RngStream(0))
    ws, _, _, _ = list(spec.slices())[-1]
    theta0[ws] = 0.0
    cfg = FitConfig(5, 200, resample_each_epoch=False, natural_gradient=True)
    _, diag = fit_least_squares(spec, theta0, lambda b: np.full(b.count, 2.0), frozen(X), cfg)
    assert diag.final_loss < 1e-10


def test_frozen_natural_gradient_is_monotone():
    spec = NetworkSpec(1, (12, 12))
    X = np.linspace(-1, 1, 300)[:, None]
    cfg = FitConfig(40, 300, resample_each_epoch=False, natural_gradient=True)
    _, diag = fit_least_squares(spec, init_params(spec, RngStream(1)),
                                lambda b: np.sin(3 * b.points[:, 0]), frozen(X), cfg)
    tail = np.asarray(diag.losses[len(diag.losses) // 5:])
    assert np.all(np.diff(tail) <= 0.0)
    assert diag.epochs == 40 and len(diag.csv_rows(3)) == 40


def test_duplicate_points_are_handled():
    spec = NetworkSpec(1, (6,))
    X = np.full((50, 1), 0.3)
    cfg = FitConfig(3, 50, resample_each_epoch=False, natural_gradient=True)
    theta, diag = fit_least_squares(spec, init_params(spec, RngStream(2)),
                                    lambda b: np.ones(b.count), frozen(X), cfg)
    assert np.all(np.isfinite(theta)) and np.isfinite(diag.final_loss)


def test_loss_gradient_matches_finite_differences():
    spec = NetworkSpec(2, (5, 4), "sin")
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 2))
    y = rng.normal(size=30)
    theta = rng.normal(scale=0.5, size=spec.dof_count)
    u, J = forward_and_jacobian(spec, theta, X)
    grad = 2.0 * J.T @ (u - y) / 30
    h = 1e-6
    fd = np.array([(mse_loss(forward(spec, theta + h * e, X), y)
                    - mse_loss(forward(spec, theta - h * e, X), y)) / (2 * h)
                   for e in np.eye(spec.dof_count)])
    assert np.max(np.abs(grad - fd)) / np.max(np.abs(fd)) < 1e-5


def test_adam_fit_reduces_loss():
    spec = NetworkSpec(1, (10,))
    dom = Domain.box([-1], [1])
    cfg = FitConfig(300, 200, learning_rate=1e-2)
    sampler = lambda th, rng: uniform_sample(dom, ParamSpace(), 200, rng)  # noqa: E731
    _, diag = fit_least_squares(spec, init_params(spec, RngStream(5)),
                                lambda b: b.points[:, 0] ** 2, sampler, cfg, rng=RngStream(6))
    assert diag.final_loss < 0.1 * diag.losses[0]


def test_natural_gradient_through_adam():
    spec = NetworkSpec(1, (8,))
    X = np.linspace(-1, 1, 100)[:, None]
    cfg = FitConfig(50, 100, learning_rate=1e-2, resample_each_epoch=False,
                    natural_gradient=True, ng_mode="adam")
    _, diag = fit_least_squares(spec, init_params(spec, RngStream(7)),
                                lambda b: np.cos(b.points[:, 0]), frozen(X), cfg)
    assert diag.final_loss < diag.losses[0]


def test_fits_are_reproducible():
    spec = NetworkSpec(2, (6,))
    dom = Domain.box([0, 0], [1, 1])
    cfg = FitConfig(10, 100, natural_gradient=True)
    sampler = lambda th, rng: uniform_sample(dom, ParamSpace(), 100, rng)  # noqa: E731
    target = lambda b: np.exp(-b.points[:, 0])  # noqa: E731
    a = fit_least_squares(spec, init_params(spec, RngStream(8)), target, sampler, cfg,
                          rng=RngStream(9))[0]
    b = fit_least_squares(spec, init_params(spec, RngStream(8)), target, sampler, cfg,
                          rng=RngStream(9))[0]
    assert np.array_equal(a, b)


def test_strong_boundary_is_exact():
    phi = lambda X: X[:, 0] * (1 - X[:, 0])  # noqa: E731
    g = lambda X: 1.0 + X[:, 0]  # noqa: E731
    model = Model(NetworkSpec(1, (5,)), BoundaryCondition.strong(phi, g))
    Xb = np.repeat([[0.0], [1.0]], 50, axis=0)
    for seed in range(3):
        theta = np.random.default_rng(seed).normal(scale=3, size=model.spec.dof_count)
        np.testing.assert_allclose(model(theta, Xb), g(Xb), atol=1e-12)
        u, J = model.value_and_jacobian(theta, Xb)
        np.testing.assert_allclose(J, 0.0, atol=1e-12)


def test_weak_boundary_pulls_towards_data():
    dom = Domain.box([0], [1])
    bsamp = lambda n, rng: SampleBatch(np.tile([[0.0], [1.0]], (n // 2, 1)), np.zeros((n, 0)))  # noqa: E731
    bc = BoundaryCondition.weak(lambda X: np.full(len(X), 3.0), 10.0, bsamp, 20)
    spec = NetworkSpec(1, (6,))
    cfg = FitConfig(30, 100, natural_gradient=True)
    sampler = lambda th, rng: uniform_sample(dom, ParamSpace(), 100, rng)  # noqa: E731
    theta, _ = fit_least_squares(spec, init_params(spec, RngStream(1)),
                                 lambda b: np.zeros(b.count), sampler, cfg, bc=bc)
    ends = forward(spec, theta, [[0.0], [1.0]])
    assert np.all(ends > 1.0)


def test_nonfinite_target_raises():
    spec = NetworkSpec(1, (3,))
    X = np.zeros((5, 1))
    with pytest.raises(FitError):
        fit_least_squares(spec, np.zeros(spec.dof_count), lambda b: np.full(5, np.inf), frozen(X),
                          FitConfig(2, 5, resample_each_epoch=False))


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(0, 10)
    with pytest.raises(ValueError):
        FitConfig(1, 10, learning_rate=0.0)
    with pytest.raises(ValueError):
        FitConfig(1, 10, ng_mode="lbfgs")
    with pytest.raises(ValueError):
        BoundaryCondition.weak(lambda X: X, 0.0, None, 1)
