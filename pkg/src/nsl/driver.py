"""Neural semi-Lagrangian time stepping."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .characteristics import FlowConfig, diffusion_directions, diffusion_offset, foot, wrap_periodic
from .fit import BoundaryCondition, FitConfig, FitError, Model, StepDiagnostics, fit_least_squares
from .network import ActivationKind, NetworkSpec, init_params, save_params
from .numerics import RngStream
from .sampling import AdaptiveConfig, adaptive_sample, gradient_focus, uniform_sample

log = logging.getLogger(__name__)

# fixed sub-stream indices so that each consumer of randomness is independent
STREAM_INIT_PARAMS = 0
STREAM_INIT_FIT = 1
STREAM_STEPS = 2
STREAM_PROBES = 3


@dataclass(frozen=True)
class NslConfig:
    final_time: float
    n_steps: int
    init: FitConfig
    iter: FitConfig
    layer_sizes: tuple = (30, 30)
    activation: ActivationKind = ActivationKind.TANH
    flow: FlowConfig = FlowConfig()
    sigma: float = 0.0
    boundary: BoundaryCondition = BoundaryCondition.none()
    adaptive: bool = False
    adaptive_cfg: AdaptiveConfig = AdaptiveConfig()

    def __post_init__(self):
        if self.final_time <= 0:
            raise ValueError("final_time must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        object.__setattr__(self, "layer_sizes", tuple(int(w) for w in self.layer_sizes))
        object.__setattr__(self, "activation", ActivationKind.parse(self.activation))

    @property
    def dt(self):
        return self.final_time / max(self.n_steps, 1)

    def with_(self, **kw) -> "NslConfig":
        return replace(self, **kw)


@dataclass
class NslTrajectory:
    spec: NetworkSpec
    times: list = field(default_factory=list)
    params: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    complete: bool = True
    error: Optional[str] = None

    def append(self, t, theta, diag):
        self.times.append(float(t))
        self.params.append(np.array(theta, copy=True))
        self.diagnostics.append(diag)

    @property
    def final_params(self):
        return self.params[-1]


def network_spec(scenario, cfg: NslConfig) -> NetworkSpec:
    return NetworkSpec(scenario.domain.dim + scenario.pspace.dim, cfg.layer_sizes, cfg.activation)


def _sampler(scenario, cfg: NslConfig, model: Model, n):
    focus_kind = scenario.focus if cfg.adaptive else None

    def sample(theta, rng):
        if focus_kind is None:
            return uniform_sample(scenario.domain, scenario.pspace, n, rng)
        if focus_kind == "solution":
            th = np.array(theta, copy=True)
            f = lambda x, mu: model(th, np.hstack([x, mu]))  # noqa: E731
        else:
            f = gradient_focus(model.spec, theta, model)
        return adaptive_sample(scenario.domain, scenario.pspace, n, f, cfg.adaptive_cfg, rng)

    return sample


def init_fit(scenario, cfg: NslConfig, rng: RngStream, theta0=None):
    """Fit the initial condition; returns ``(theta0, diagnostics)``."""
    spec = network_spec(scenario, cfg)
    model = Model(spec, cfg.boundary)
    if theta0 is None:
        theta0 = init_params(spec, rng.spawn(STREAM_INIT_PARAMS))

    def target(batch):
        return scenario.u0(batch.points, batch.params)

    sampler = _sampler(scenario, cfg, model, cfg.init.n_collocation)
    return fit_least_squares(model, theta0, target, sampler, cfg.init, rng=rng.spawn(STREAM_INIT_FIT))


def step_target(model: Model, theta_n, scenario, t_n, dt, cfg: NslConfig):
    """Target ``batch -> values`` for the step from ``t_n`` to ``t_n + dt``."""
    th = np.array(theta_n, copy=True)
    dom = scenario.domain
    d = dom.dim
    sigma = cfg.sigma

    def target(batch):
        x, mu = batch.points, batch.params
        ft = foot(scenario.field, t_n, t_n + dt, x, mu, cfg.flow)
        ft = wrap_periodic(dom, ft)
        if sigma <= 0:
            return model(th, np.hstack([ft, mu]))
        r = diffusion_offset(sigma, dt, d)
        acc = np.zeros(x.shape[0])
        for v in diffusion_directions(d):
            acc += model(th, np.hstack([wrap_periodic(dom, ft + r * v), mu]))
        return acc / (2 * d)

    return target


def nsl_step(theta_n, scenario, t_n, dt, cfg: NslConfig, rng: RngStream, fit_cfg=None):
    """Advance one step from ``theta_n``; warm-starts the fit at ``theta_n``."""
    spec = network_spec(scenario, cfg)
    model = Model(spec, cfg.boundary)
    fit_cfg = fit_cfg or cfg.iter
    target = step_target(model, theta_n, scenario, t_n, dt, cfg)
    sampler = _sampler(scenario, cfg, model, fit_cfg.n_collocation)
    theta, diag = fit_least_squares(model, theta_n, target, sampler, fit_cfg, rng=rng)
    nrm = np.linalg.norm(theta_n)
    diag.rel_change = float(np.linalg.norm(theta - theta_n) / nrm) if nrm > 0 else np.inf
    return theta, diag


def run(scenario, cfg: NslConfig, rng: RngStream, checkpoint_dir=None, theta0=None,
        init_diag=None, step_callback=None) -> NslTrajectory:
    """Initial fit followed by ``n_steps`` warm-started steps.

    ``theta0`` skips the initial fit (used to share one initialization
    across runs).  A fit failure or a non-finite field stops the loop and
    returns the partial trajectory with ``complete = False``.
    """
    spec = network_spec(scenario, cfg)
    traj = NslTrajectory(spec)
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt is not None:
        ckpt.mkdir(parents=True, exist_ok=True)
    if theta0 is None:
        try:
            theta0, init_diag = init_fit(scenario, cfg, rng)
        except FitError as exc:
            traj.complete, traj.error = False, f"initial fit failed: {exc}"
            return traj
    traj.append(0.0, theta0, init_diag or StepDiagnostics())
    if ckpt is not None:
        save_params(ckpt / "step_0000.bin", spec, theta0)
    step_rng = rng.spawn(STREAM_STEPS)
    dt = cfg.dt
    theta = theta0
    for n in range(cfg.n_steps):
        t_n = n * dt
        t0 = time.perf_counter()
        try:
            theta, diag = nsl_step(theta, scenario, t_n, dt, cfg, step_rng)
        except (FitError, FloatingPointError) as exc:
            traj.complete, traj.error = False, f"step {n + 1} failed: {exc}"
            if getattr(exc, "diagnostics", None) is not None:
                traj.diagnostics.append(exc.diagnostics)
            return traj
        traj.append((n + 1) * dt, theta, diag)
        log.info("step %d/%d t=%.4g loss=%.3e (%.1f s)", n + 1, cfg.n_steps, (n + 1) * dt,
                 diag.final_loss, time.perf_counter() - t0)
        if ckpt is not None:
            save_params(ckpt / f"step_{n + 1:04d}.bin", spec, theta)
        if step_callback is not None:
            step_callback(n + 1, theta, diag)
    return traj
