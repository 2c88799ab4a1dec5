"""scikit-learn style wrappers around the solvers.

These give the usual ``fit`` / ``predict`` / ``get_params`` surface so the
solvers can be dropped into parameter searches.  The functional API in the
other modules stays the primary interface.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .classical import grid_interpolate, sl_run
from .driver import STREAM_PROBES, run
from .fit import FitConfig, fit_least_squares
from .metrics import relative_error
from .network import NetworkSpec, forward, init_params
from .numerics import RngStream
from .sampling import SampleBatch, uniform_sample
from .scenarios import exact_eval, make_scenario


class NetworkRegressor(RegressorMixin, BaseEstimator):
    """Least-squares fit of a small MLP to ``(X, y)`` on the full batch."""

    def __init__(self, layer_sizes=(20, 20), activation="tanh", n_epochs=200,
                 natural_gradient=True, learning_rate=1e-3, random_state=0):
        self.layer_sizes = layer_sizes
        self.activation = activation
        self.n_epochs = n_epochs
        self.natural_gradient = natural_gradient
        self.learning_rate = learning_rate
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self.spec_ = NetworkSpec(X.shape[1], tuple(self.layer_sizes), self.activation)
        rng = RngStream(int(self.random_state))
        theta = init_params(self.spec_, rng.spawn(0))
        batch = SampleBatch(X, np.zeros((X.shape[0], 0)))
        cfg = FitConfig(int(self.n_epochs), X.shape[0], float(self.learning_rate),
                        resample_each_epoch=False, natural_gradient=bool(self.natural_gradient))
        self.coef_, self.diagnostics_ = fit_least_squares(
            self.spec_, theta, lambda b: y, lambda th, r: batch, cfg, rng=rng.spawn(1))
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return forward(self.spec_, self.coef_, X)


class _ScenarioSolver(BaseEstimator):
    def _scenario(self):
        opts = dict(self.scenario_options or {})
        return make_scenario(self.scenario, self.dim, **opts)

    def _check_inputs(self, X):
        check_is_fitted(self, "scenario_")
        X = check_array(X, dtype=np.float64)
        width = self.scenario_.dim + self.scenario_.pspace.dim
        if X.shape[1] != width:
            raise ValueError(f"expected {width} columns (space then parameters), got {X.shape[1]}")
        return X

    def score(self, X=None, y=None):
        """Negative relative L2 error against the exact solution at the final time."""
        check_is_fitted(self, "scenario_")
        sc = self.scenario_
        if X is None:
            b = uniform_sample(sc.domain, sc.pspace, 20000, RngStream(0).spawn(STREAM_PROBES))
            X = b.inputs
        X = self._check_inputs(X)
        d = sc.dim
        if y is None:
            y = exact_eval(sc, sc.final_time, X[:, :d], X[:, d:])
        return -relative_error(self.predict(X), y, norm=sc.error_norm).e_l2


class NeuralSemiLagrangian(_ScenarioSolver):
    """Neural semi-Lagrangian solve of a named scenario.

    Unset hyperparameters fall back to the scenario's desk-scale preset.
    ``predict`` evaluates the network at the final time.
    """

    def __init__(self, scenario="constant_1d", dim=None, n_steps=None, layer_sizes=None,
                 activation=None, init_epochs=None, iter_epochs=None, n_collocation=None,
                 natural_gradient=None, adaptive=None, scenario_options=None, random_state=0):
        self.scenario = scenario
        self.dim = dim
        self.n_steps = n_steps
        self.layer_sizes = layer_sizes
        self.activation = activation
        self.init_epochs = init_epochs
        self.iter_epochs = iter_epochs
        self.n_collocation = n_collocation
        self.natural_gradient = natural_gradient
        self.adaptive = adaptive
        self.scenario_options = scenario_options
        self.random_state = random_state

    def _config(self, sc):
        cfg = sc.defaults
        init, it = cfg.init, cfg.iter
        if self.init_epochs is not None:
            init = init.with_(n_epochs=int(self.init_epochs))
        if self.iter_epochs is not None:
            it = it.with_(n_epochs=int(self.iter_epochs))
        if self.n_collocation is not None:
            init = init.with_(n_collocation=int(self.n_collocation))
            it = it.with_(n_collocation=int(self.n_collocation))
        if self.natural_gradient is not None:
            init = init.with_(natural_gradient=bool(self.natural_gradient))
            it = it.with_(natural_gradient=bool(self.natural_gradient))
        kw = {"init": init, "iter": it}
        for name, key in (("n_steps", "n_steps"), ("layer_sizes", "layer_sizes"),
                          ("activation", "activation"), ("adaptive", "adaptive")):
            val = getattr(self, name)
            if val is not None:
                kw[key] = val
        return cfg.with_(**kw)

    def fit(self, X=None, y=None):
        """Run the solver; ``X`` and ``y`` are ignored (the scenario defines the problem)."""
        self.scenario_ = sc = self._scenario()
        self.config_ = self._config(sc)
        self.trajectory_ = run(sc, self.config_, RngStream(int(self.random_state)))
        if not self.trajectory_.complete:
            raise RuntimeError(self.trajectory_.error)
        self.coef_ = self.trajectory_.final_params
        return self

    def predict(self, X):
        X = self._check_inputs(X)
        return forward(self.trajectory_.spec, self.coef_, X)


class ClassicalSemiLagrangian(_ScenarioSolver):
    """Grid semi-Lagrangian baseline with cubic Lagrange interpolation."""

    def __init__(self, scenario="ad_gaussian", dim=None, n_x=64, n_steps=None,
                 scenario_options=None):
        self.scenario = scenario
        self.dim = dim
        self.n_x = n_x
        self.n_steps = n_steps
        self.scenario_options = scenario_options

    def fit(self, X=None, y=None):
        self.scenario_ = sc = self._scenario()
        n_t = self.n_steps if self.n_steps is not None else sc.defaults.n_steps
        self.field_, self.report_ = sl_run(sc, int(self.n_x), int(n_t))
        return self

    def predict(self, X):
        X = self._check_inputs(X)
        return grid_interpolate(self.field_, X[:, :self.scenario_.dim])
