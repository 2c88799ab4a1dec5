"""Sampled least-squares training: MSE, Adam, natural gradient, boundary terms."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .network import NetworkSpec, forward, forward_and_jacobian, input_gradient
from .numerics import RngStream, spd_solve

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class FitError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters of one least-squares solve.

    ``ng_mode`` selects how the natural-gradient direction is applied:
    ``"gauss_newton"`` takes damped unit steps with a monotone safeguard,
    ``"adam"`` feeds the preconditioned direction to Adam.
    """

    n_epochs: int = 100
    n_collocation: int = 1000
    learning_rate: float = 1e-3
    resample_each_epoch: bool = True
    natural_gradient: bool = False
    stop_loss: Optional[float] = None
    ng_damping: Optional[float] = None
    ng_mode: str = "gauss_newton"
    ng_max_tries: int = 8

    def __post_init__(self):
        if self.n_epochs < 1 or self.n_collocation < 1:
            raise ValueError("n_epochs and n_collocation must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.ng_mode not in ("gauss_newton", "adam"):
            raise ValueError(f"unknown ng_mode {self.ng_mode!r}")

    def with_(self, **kw) -> "FitConfig":
        return replace(self, **kw)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(state: AdamState, theta, grad, lr):
    """One bias-corrected Adam update; returns ``(theta, state)``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.m.shape or np.shape(theta) != grad.shape:
        raise ValueError("theta, gradient and Adam moments must have equal length")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient passed to Adam")
    t = state.step + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grad
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grad * grad
    m_hat = m / (1.0 - ADAM_BETA1 ** t)
    v_hat = v / (1.0 - ADAM_BETA2 ** t)
    theta = np.asarray(theta, dtype=np.float64) - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return theta, AdamState(m, v, t)


def mse_loss(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {target.shape}")
    r = pred - target
    return float(np.mean(r * r))


def default_damping(G):
    return 1e-6 * (np.trace(G) / G.shape[0] + 1.0)


def fisher_matrix(J):
    J = np.asarray(J, dtype=np.float64)
    return (J.T @ J) / J.shape[0]


def natural_grad_direction(J, g, damping=None, G=None):
    """Solve ``(J^T J / K + damping I) eta = g``.

    With ``g = J^T r / K`` (gradient of half the MSE) a unit step
    ``theta - eta`` is the damped Gauss-Newton step.
    """
    J = np.asarray(J, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if J.shape[1] != g.shape[0]:
        raise ValueError("Jacobian column count must equal gradient length")
    if G is None:
        G = fisher_matrix(J)
    lam = default_damping(G) if damping is None else float(damping)
    return spd_solve(G, g, lam)


@dataclass(frozen=True)
class BoundaryCondition:
    """How the boundary data enters the fit.

    ``strong``: the model is ``phi * u + g`` (``phi`` vanishes on the
    boundary).  ``weak``: the loss gains ``weight * MSE(u - g)`` over
    points drawn by ``sampler(n, rng)``.  ``periodic`` is handled by the
    characteristic wrapping and changes nothing here.
    """

    mode: str = "none"
    phi: Optional[Callable] = None
    g: Optional[Callable] = None
    weight: float = 0.0
    sampler: Optional[Callable] = None
    n_boundary: int = 0

    def __post_init__(self):
        if self.mode not in ("none", "periodic", "strong", "weak"):
            raise ValueError(f"unknown boundary mode {self.mode!r}")
        if self.mode == "strong" and (self.phi is None or self.g is None):
            raise ValueError("strong boundary conditions need phi and g")
        if self.mode == "weak" and (self.g is None or self.sampler is None or self.weight <= 0):
            raise ValueError("weak boundary conditions need g, a sampler and a positive weight")

    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def periodic(cls):
        return cls("periodic")

    @classmethod
    def strong(cls, phi, g):
        return cls("strong", phi=phi, g=g)

    @classmethod
    def weak(cls, g, weight, sampler, n_boundary):
        return cls("weak", g=g, weight=float(weight), sampler=sampler, n_boundary=int(n_boundary))


class Model:
    """A network together with its boundary treatment; inputs are ``(x, mu)`` rows."""

    def __init__(self, spec: NetworkSpec, bc: Optional[BoundaryCondition] = None):
        self.spec = spec
        self.bc = bc or BoundaryCondition.none()
        self._strong = self.bc.mode == "strong"

    def __call__(self, theta, X):
        u = forward(self.spec, theta, X)
        if self._strong:
            X = np.atleast_2d(X)
            return self.bc.phi(X) * u + self.bc.g(X)
        return u

    def value_and_jacobian(self, theta, X):
        u, J = forward_and_jacobian(self.spec, theta, X)
        if self._strong:
            X = np.atleast_2d(X)
            phi = np.asarray(self.bc.phi(X))
            return phi * u + self.bc.g(X), J * phi[:, None]
        return u, J

    def input_gradient(self, theta, X):
        gu = input_gradient(self.spec, theta, X)
        if not self._strong:
            return gu
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        u = forward(self.spec, theta, X)
        phi = self.bc.phi(X)
        h = 1e-6
        gphi = np.empty_like(X)
        gg = np.empty_like(X)
        for i in range(X.shape[1]):
            e = np.zeros(X.shape[1])
            e[i] = h
            gphi[:, i] = (self.bc.phi(X + e) - self.bc.phi(X - e)) / (2 * h)
            gg[:, i] = (self.bc.g(X + e) - self.bc.g(X - e)) / (2 * h)
        return phi[:, None] * gu + u[:, None] * gphi + gg


@dataclass
class StepDiagnostics:
    final_loss: float = np.nan
    epochs: int = 0
    wall_ms: float = 0.0
    losses: list = field(default_factory=list)
    epoch_ms: list = field(default_factory=list)
    rel_change: float = np.nan
    stopped_early: bool = False

    def csv_rows(self, step):
        return [(step, e + 1, loss, ms) for e, (loss, ms) in enumerate(zip(self.losses, self.epoch_ms))]


def _weak_rows(model, theta, bc, bbatch, K, need_jac):
    X = bbatch.inputs
    scale = np.sqrt(bc.weight * K / X.shape[0])
    gv = np.asarray(bc.g(X))
    if need_jac:
        u, J = forward_and_jacobian(model.spec, theta, X)
        return scale * (u - gv), scale * J
    return scale * (forward(model.spec, theta, X) - gv), None


def fit_least_squares(spec_or_model, theta_init, target, sampler, cfg: FitConfig,
                      bc: Optional[BoundaryCondition] = None, rng: Optional[RngStream] = None,
                      callback=None):
    """Minimize the sampled MSE between the model and ``target``.

    ``sampler(theta, rng)`` returns a :class:`SampleBatch`; ``target(batch)``
    returns the values to fit there.  Returns ``(theta, StepDiagnostics)``.
    """
    model = spec_or_model if isinstance(spec_or_model, Model) else Model(spec_or_model, bc)
    bc = model.bc
    rng = rng if rng is not None else RngStream(0)
    theta = np.array(theta_init, dtype=np.float64, copy=True)
    diag = StepDiagnostics()
    adam = AdamState.zeros(theta.size)
    lam_mult = 1.0
    t0 = time.perf_counter()
    batch = y = bbatch = None

    def residual_loss(th, X, yv):
        r = model(th, X) - yv
        if bc.mode == "weak":
            rb, _ = _weak_rows(model, th, bc, bbatch, X.shape[0], False)
            r = np.concatenate([r, rb])
        return float(np.mean(r * r)) * r.size / X.shape[0]

    for epoch in range(cfg.n_epochs):
        if batch is None or cfg.resample_each_epoch:
            batch = sampler(theta, rng)
            y = np.asarray(target(batch), dtype=np.float64)
            if bc.mode == "weak":
                bbatch = bc.sampler(bc.n_boundary, rng)
        X = batch.inputs
        K = X.shape[0]
        pred, J = model.value_and_jacobian(theta, X)
        r = pred - y
        if bc.mode == "weak":
            rb, Jb = _weak_rows(model, theta, bc, bbatch, K, True)
            r = np.concatenate([r, rb])
            J = np.vstack([J, Jb])
        loss = float(r @ r) / K
        if not np.isfinite(loss):
            diag.final_loss = loss
            raise FitError("loss became non-finite", diag)
        g = (J.T @ r) / K
        if cfg.natural_gradient:
            G = (J.T @ J) / K
            base = default_damping(G) if cfg.ng_damping is None else cfg.ng_damping
            if cfg.ng_mode == "adam":
                eta = spd_solve(G, g, base)
                theta, adam = adam_step(adam, theta, eta, cfg.learning_rate)
                new_loss = None
            else:
                new_loss = loss
                for _ in range(cfg.ng_max_tries):
                    eta = spd_solve(G, g, base * lam_mult)
                    cand = theta - eta
                    cl = residual_loss(cand, X, y)
                    if np.isfinite(cl) and cl <= loss:
                        theta, new_loss = cand, cl
                        lam_mult = max(lam_mult / 3.0, 1.0)
                        break
                    lam_mult *= 10.0
        else:
            theta, adam = adam_step(adam, theta, 2.0 * g, cfg.learning_rate)
            new_loss = None
        diag.losses.append(loss if new_loss is None else new_loss)
        diag.epoch_ms.append(1e3 * (time.perf_counter() - t0))
        diag.epochs = epoch + 1
        if callback is not None:
            callback(epoch, theta, diag.losses[-1])
        if cfg.stop_loss is not None and diag.losses[-1] < cfg.stop_loss:
            diag.stopped_early = True
            break
    if not cfg.natural_gradient or cfg.ng_mode == "adam":
        # report the loss of the returned parameters on the last batch
        diag.losses[-1] = residual_loss(theta, batch.inputs, y)
    diag.final_loss = diag.losses[-1]
    diag.wall_ms = 1e3 * (time.perf_counter() - t0)
    if not np.isfinite(diag.final_loss):
        raise FitError("loss became non-finite", diag)
    return theta, diag
