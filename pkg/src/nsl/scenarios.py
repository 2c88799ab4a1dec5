"""Benchmark problems: domains, fields, initial data, exact solutions, defaults."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .characteristics import AdvectionField, Domain, FlowConfig, wrap_periodic
from .classical import MEMORY_CAP, Grid, GridBudgetError, GridField, shift_axis
from .driver import NslConfig
from .fit import FitConfig
from .network import ActivationKind
from .sampling import AdaptiveConfig, ParamSpace

TWO_PI = 2.0 * np.pi
SCENARIO_NAMES = ("constant_1d", "constant_1d_param", "rotating_2d", "vlasov_1d1v", "cylinder_3d",
                  "levelset_2d", "levelset_3d", "ad_periodic", "ad_gaussian", "heat_1d")


class MissingExactSolution(LookupError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    domain: Domain
    pspace: ParamSpace
    field: AdvectionField
    sigma: float
    u0: Callable
    final_time: float
    defaults: NslConfig
    paper_defaults: NslConfig
    exact: Optional[Callable] = None
    # times where ``exact`` is valid; None means every time
    exact_times: Optional[tuple] = None
    focus: Optional[str] = None
    error_norm: str = "pointwise"
    options: dict = field(default_factory=dict)
    gaussian: Optional["GaussianSpec"] = None

    @property
    def dim(self):
        return self.domain.dim

    def has_exact(self, t) -> bool:
        if self.exact is None:
            return False
        return self.exact_times is None or any(np.isclose(t, s, atol=1e-12) for s in self.exact_times)

    def content_hash(self) -> str:
        payload = {"name": self.name, "options": {k: self.options[k] for k in sorted(self.options)},
                   "lower": self.domain.lower, "extent": self.domain.extent,
                   "periodic": self.domain.periodic, "shape": self.domain.shape,
                   "plower": self.pspace.lower, "pupper": self.pspace.upper,
                   "sigma": self.sigma, "T": self.final_time, "field": self.field.kind}
        blob = json.dumps(payload, sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class GaussianSpec:
    """Covariance and mean of the advected, diffused anisotropic Gaussian."""

    dim: int
    velocity: np.ndarray
    sigma: float
    sigma0: float = 0.05

    @property
    def cov0(self):
        d = self.dim
        i = np.arange(d)
        tilde = d - np.abs(i[:, None] - i[None, :])
        return 2 * d * self.sigma0 ** 2 * (2 * d * np.eye(d) + tilde)

    def cov(self, t):
        return self.cov0 + 2.0 * self.sigma * t * np.eye(self.dim)

    def mean(self, t):
        return np.asarray(self.velocity) * t

    def value(self, t, x):
        C = self.cov(t)
        y = np.atleast_2d(x) - self.mean(t)
        q = np.einsum("ki,ij,kj->k", y, np.linalg.inv(C), y)
        amp = np.sqrt(np.linalg.det(self.cov0) / np.linalg.det(C))
        return 1.0 + amp * np.exp(-0.5 * q)


def _cfg(T, n_t, init, it, layers, act, *, flow=1, sigma=0.0, adaptive=False, sigmas=(0.5, 10.0, 500.0)):
    return NslConfig(final_time=T, n_steps=n_t, init=init, iter=it, layer_sizes=layers,
                     activation=act, flow=FlowConfig(flow), sigma=sigma, adaptive=adaptive,
                     adaptive_cfg=AdaptiveConfig(sigmas))


TANH, SIN, HAT = ActivationKind.TANH, ActivationKind.SIN, ActivationKind.REGULARIZED_HAT


def _rotation_flow(s, t, x):
    """Closed-form characteristic of the counter-clockwise rotation at angular speed 2 pi."""
    k1 = x[:, 0] * np.sin(TWO_PI * s) + x[:, 1] * np.cos(TWO_PI * s)
    k2 = x[:, 0] * np.cos(TWO_PI * s) - x[:, 1] * np.sin(TWO_PI * s)
    ct, st = np.cos(TWO_PI * t), np.sin(TWO_PI * t)
    return np.stack([k2 * ct + k1 * st, k1 * ct - k2 * st], axis=1)


def _bump(t, x, mu):
    # mu = (v, c): width and orbit radius
    v, c = mu[:, 0], mu[:, 1]
    r2 = (x[:, 0] - c * np.cos(TWO_PI * t)) ** 2 + (x[:, 1] - c * np.sin(TWO_PI * t)) ** 2
    return r2, v


def _constant_1d(opts, parametric):
    dom = Domain.box([0.0], [2.0], periodic=True)
    if parametric:
        ps = ParamSpace((0.05, 0.5), (0.15, 1.0))
        fld = AdvectionField.constant(lambda mu: mu[:, 1:2], 1)

        def u0(x, mu):
            return np.exp(-(x[:, 0] - 0.5) ** 2 / (2.0 * mu[:, 0] ** 2))

        def exact(t, x, mu):
            return u0(wrap_periodic(dom, x - mu[:, 1:2] * t), mu)

        paper = _cfg(1.0, 4, FitConfig(2500, 3000, 1.5e-2), FitConfig(2500, 10000, 5e-3),
                     (40, 60, 80, 60, 40), TANH)
        desk = _cfg(1.0, 4, FitConfig(300, 3000, natural_gradient=True),
                    FitConfig(40, 3000, natural_gradient=True), (20, 20), TANH)
    else:
        nu = float(opts.get("nu", 0.1))
        a = float(opts.get("a", 1.0))
        ps = ParamSpace()
        fld = AdvectionField.constant([a], 1)

        def u0(x, mu):
            return np.exp(-(x[:, 0] - 0.5) ** 2 / (2.0 * nu ** 2))

        def exact(t, x, mu):
            return u0(wrap_periodic(dom, x - a * t), mu)

        paper = _cfg(1.0, 4, FitConfig(1500, 3000, 1.5e-2), FitConfig(150, 1000, 1.5e-2),
                     (40, 40, 40), TANH)
        desk = _cfg(1.0, 4, FitConfig(200, 2000, natural_gradient=True),
                    FitConfig(300, 2000, natural_gradient=True), (20, 20), TANH)
    return dict(domain=dom, pspace=ps, field=fld, sigma=0.0, u0=u0, final_time=1.0, exact=exact,
                defaults=desk, paper_defaults=paper, error_norm="global")


def _rotating_2d(opts):
    dom = Domain((-1.0, -1.0), (2.0, 2.0), (False, False), shape="disk")
    ps = ParamSpace((0.05, 0.2), (0.1, 0.4))

    def vel(t, x, mu):
        return np.stack([-TWO_PI * x[:, 1], TWO_PI * x[:, 0]], axis=1)

    fld = AdvectionField.closed_form(vel, lambda s, t, x, mu: _rotation_flow(s, t, x), 2)

    def exact(t, x, mu):
        r2, v = _bump(t, x, mu)
        return 1.0 + np.exp(-r2 / (2.0 * v ** 2))

    paper = _cfg(1.0, 2, FitConfig(700, 15000, 1e-3), FitConfig(500, 15000, 5e-3),
                 (40, 40, 40, 40, 40), HAT)
    desk = _cfg(1.0, 2, FitConfig(300, 4000, natural_gradient=True),
                FitConfig(40, 4000, natural_gradient=True), (30, 30), TANH)
    return dict(domain=dom, pspace=ps, field=fld, sigma=0.0, u0=lambda x, mu: exact(0.0, x, mu),
                final_time=1.0, exact=exact, defaults=desk, paper_defaults=paper, focus="gradient")


def _vlasov(opts):
    dom = Domain.box([0.0, -6.0], [TWO_PI, 6.0], periodic=True)

    def vel(t, x, mu):
        return np.stack([x[:, 1], np.sin(x[:, 0])], axis=1)

    def u0(x, mu):
        return np.exp(-0.5 * x[:, 1] ** 2) / np.sqrt(TWO_PI)

    paper = _cfg(4.5, 3, FitConfig(250, 5000, 1e-3), FitConfig(500, 15000, 5e-3),
                 (40, 40, 40, 40, 40), HAT, flow=5)
    desk = _cfg(4.5, 3, FitConfig(200, 4000, natural_gradient=True),
                FitConfig(40, 4000, natural_gradient=True), (30, 30), TANH, flow=5)
    return dict(domain=dom, pspace=ParamSpace(), field=AdvectionField.generic(vel, 2), sigma=0.0,
                u0=u0, final_time=4.5, exact=None, defaults=desk, paper_defaults=paper,
                error_norm="global")


def _cylinder(opts):
    dom = Domain((-1.0, -1.0, 0.0), (2.0, 2.0, 2.0), (False, False, True), shape="cylinder")
    ps = ParamSpace((0.05, 0.3), (0.15, 0.5))

    def vel(t, x, mu):
        return np.stack([-TWO_PI * x[:, 1], TWO_PI * x[:, 0], np.ones(x.shape[0])], axis=1)

    def flow(s, t, x, mu):
        xy = _rotation_flow(s, t, x[:, :2])
        return np.column_stack([xy, x[:, 2] + (s - t)])

    def exact(t, x, mu):
        r2, v = _bump(t, x, mu)
        z = np.mod(x[:, 2] - t, 2.0) - 1.0
        return 1.0 + np.exp(-(r2 + z * z) / (2.0 * v ** 2))

    paper = _cfg(2.0, 4, FitConfig(500, 150000, natural_gradient=True),
                 FitConfig(200, 150000, natural_gradient=True), (60, 60, 60), TANH, adaptive=True)
    desk = _cfg(2.0, 4, FitConfig(200, 5000, natural_gradient=True),
                FitConfig(30, 5000, natural_gradient=True), (20, 40, 20), TANH, adaptive=True)
    return dict(domain=dom, pspace=ps, field=AdvectionField.closed_form(vel, flow, 3), sigma=0.0,
                u0=lambda x, mu: exact(0.0, x, mu), final_time=2.0, exact=exact, defaults=desk,
                paper_defaults=paper, focus="gradient")


def _levelset(opts, d):
    if d == 2:
        T = float(opts.get("T", 8.0))
        center, n_t = np.array([0.5, 0.75]), 40

        def vel(t, x, mu):
            c = np.cos(np.pi * t / T)
            return np.stack([-np.sin(np.pi * x[:, 0]) ** 2 * np.sin(TWO_PI * x[:, 1]) * c,
                             np.sin(np.pi * x[:, 1]) ** 2 * np.sin(TWO_PI * x[:, 0]) * c], axis=1)

        paper = _cfg(T, n_t, FitConfig(250, 60000, natural_gradient=True),
                     FitConfig(250, 60000, natural_gradient=True), (35, 50, 35), TANH, flow=10,
                     adaptive=True, sigmas=(2e-3, 1e-2, 5e-2))
        desk = _cfg(T, n_t, FitConfig(300, 6000, natural_gradient=True),
                    FitConfig(100, 6000, natural_gradient=True), (30, 30), TANH, flow=10,
                    adaptive=True, sigmas=(2e-3, 1e-2, 5e-2))
    else:
        T = float(opts.get("T", 3.0))
        center, n_t = np.array([0.35, 0.35, 0.35]), 10

        def vel(t, x, mu):
            c = np.cos(np.pi * t / T)
            s1, s2, s3 = (np.sin(TWO_PI * x[:, i]) for i in range(3))
            q1, q2, q3 = (np.sin(np.pi * x[:, i]) ** 2 for i in range(3))
            return np.stack([q1 * s2 * s3 * c, q2 * s1 * s3 * c, q3 * s1 * s2 * c], axis=1)

        paper = _cfg(T, n_t, FitConfig(500, 64 ** 3, natural_gradient=True),
                     FitConfig(250, 64 ** 3, natural_gradient=True), (35, 50, 50, 35), TANH,
                     flow=10, adaptive=True, sigmas=(2e-3, 1e-2, 5e-2))
        desk = _cfg(T, n_t, FitConfig(300, 8000, natural_gradient=True),
                    FitConfig(20, 8000, natural_gradient=True), (30, 30), TANH, flow=10,
                    adaptive=True, sigmas=(2e-3, 1e-2, 5e-2))

    def u0(x, mu):
        return np.sum((x - center) ** 2, axis=1) - 0.15 ** 2

    return dict(domain=Domain.box(np.zeros(d), np.ones(d)), pspace=ParamSpace(),
                field=AdvectionField.generic(vel, d), sigma=0.0, u0=u0, final_time=T,
                exact=lambda t, x, mu: u0(x, mu), exact_times=(0.0, T), defaults=desk,
                paper_defaults=paper, focus="solution", error_norm="global")


def _ad_periodic(d, opts):
    sigma = float(opts.get("sigma", 0.1))
    a = np.ones(d)
    shift = np.arange(d) / d
    T = float(opts.get("T", np.log(2.0) / (sigma * np.pi ** 2 * d)))
    n_t = int(opts.get("n_t", 20))

    def exact(t, x, mu):
        phase = (x - a * t - shift) @ a
        return 2.0 + np.sin(np.pi * phase) * np.exp(-sigma * np.pi ** 2 * (a @ a) * t)

    w = 7 * d
    paper = _cfg(T, n_t, FitConfig(250, 75000, natural_gradient=True),
                 FitConfig(5, 75000, natural_gradient=True), (w, w, w), SIN, sigma=sigma)
    desk = _cfg(T, n_t, FitConfig(150, 3000, natural_gradient=True),
                FitConfig(15, 3000, natural_gradient=True), (20,), SIN, sigma=sigma)
    return dict(domain=Domain.box(-np.ones(d), np.ones(d), periodic=True), pspace=ParamSpace(),
                field=AdvectionField.constant(a, d), sigma=sigma,
                u0=lambda x, mu: exact(0.0, x, mu), final_time=T, exact=exact,
                defaults=desk, paper_defaults=paper)


def _ad_gaussian(d, opts):
    if d < 2:
        raise ValueError("ad_gaussian needs dimension >= 2")
    sigma = float(opts.get("sigma", 0.05))
    T = float(opts.get("T", 1.0))
    n_t = int(opts.get("n_t", 5))
    g = GaussianSpec(d, np.ones(d), sigma)
    w = 7 * d
    paper = _cfg(T, n_t, FitConfig(150, 75000, natural_gradient=True),
                 FitConfig(15, 75000, natural_gradient=True), (w, w, w), HAT, sigma=sigma,
                 adaptive=True, sigmas=(20.0, 100.0, 5000.0))
    desk = _cfg(T, n_t, FitConfig(200, 4000, natural_gradient=True),
                FitConfig(15, 4000, natural_gradient=True), (w, w), TANH, sigma=sigma,
                adaptive=True, sigmas=(20.0, 100.0, 5000.0))
    return dict(domain=Domain.box(-3 * np.ones(d), 3 * np.ones(d)), pspace=ParamSpace(),
                field=AdvectionField.constant(np.ones(d), d), sigma=sigma,
                u0=lambda x, mu: g.value(0.0, x), final_time=T,
                exact=lambda t, x, mu: g.value(t, x), defaults=desk, paper_defaults=paper,
                focus="gradient", gaussian=g)


def _heat_1d(opts):
    # pure diffusion of a narrow Gaussian; the heat kernel gives the exact solution and the
    # tails stay far below double precision at the periodic boundary
    sigma = float(opts.get("sigma", 0.1))
    s0 = float(opts.get("s0", 0.15))
    T = float(opts.get("T", 0.5))
    n_t = int(opts.get("n_t", 8))

    def exact(t, x, mu):
        v = s0 ** 2 + 2.0 * sigma * t
        return 1.0 + s0 / np.sqrt(v) * np.exp(-x[:, 0] ** 2 / (2.0 * v))

    desk = _cfg(T, n_t, FitConfig(200, 2000, natural_gradient=True),
                FitConfig(100, 2000, natural_gradient=True), (20, 20), TANH, sigma=sigma)
    return dict(domain=Domain.box([-2.0], [2.0], periodic=True), pspace=ParamSpace(),
                field=AdvectionField.constant([0.0], 1), sigma=sigma,
                u0=lambda x, mu: exact(0.0, x, mu), final_time=T, exact=exact,
                defaults=desk, paper_defaults=desk)


def make_scenario(name, dim=None, **options) -> Scenario:
    """Build a named benchmark.  ``dim`` applies to the dimension-generic cases."""
    if name not in SCENARIO_NAMES:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIO_NAMES)}")
    fixed = {"constant_1d": 1, "constant_1d_param": 1, "rotating_2d": 2, "vlasov_1d1v": 2,
             "cylinder_3d": 3, "levelset_2d": 2, "levelset_3d": 3, "heat_1d": 1}
    if name in fixed:
        if dim is not None and int(dim) != fixed[name]:
            raise ValueError(f"{name} is defined in dimension {fixed[name]} only")
        d = fixed[name]
    else:
        d = 2 if dim is None else int(dim)
        if d < 1:
            raise ValueError("dimension must be >= 1")
    builders = {
        "constant_1d": lambda: _constant_1d(options, False),
        "constant_1d_param": lambda: _constant_1d(options, True),
        "rotating_2d": lambda: _rotating_2d(options),
        "vlasov_1d1v": lambda: _vlasov(options),
        "cylinder_3d": lambda: _cylinder(options),
        "levelset_2d": lambda: _levelset(options, 2),
        "levelset_3d": lambda: _levelset(options, 3),
        "ad_periodic": lambda: _ad_periodic(d, options),
        "ad_gaussian": lambda: _ad_gaussian(d, options),
        "heat_1d": lambda: _heat_1d(options),
    }
    return Scenario(name=name, options=dict(options, dim=d), **builders[name]())


def exact_eval(scenario: Scenario, t, x, mu=None):
    """Analytic solution at time ``t``; raises when it is not known there."""
    if not scenario.has_exact(t):
        raise MissingExactSolution(f"{scenario.name} has no exact solution at t={t}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if mu is None:
        mu = np.zeros((x.shape[0], scenario.pspace.dim))
    mu = np.asarray(mu, dtype=np.float64).reshape(x.shape[0], scenario.pspace.dim)
    return scenario.exact(t, x, mu)


def vlasov_reference(resolution=256, n_t=900, final_time=4.5, times=(1.5, 3.0, 4.5)):
    """Grid reference for the fixed-field Vlasov problem by Strang splitting.

    Each of the ``n_t`` steps shifts half a step in ``x`` (by ``v dt / 2``),
    a full step in ``v`` (by ``sin(x) dt``), then half a step in ``x``
    again.  Returns ``{t: GridField}`` for ``t = 0`` and every requested
    time, which must lie on the step lattice.
    """
    n = int(resolution)
    grid = Grid(2, n, (0.0, -6.0), (TWO_PI, 6.0), (True, True))
    if grid.size > MEMORY_CAP:
        raise GridBudgetError(f"{n}^2 values exceeds the cap of {MEMORY_CAP}")
    dt = final_time / n_t
    wanted = {}
    for t in times:
        k = int(round(t / dt))
        if k < 0 or k > n_t or abs(k * dt - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"time {t} is not a multiple of dt = {dt}")
        wanted[k] = float(t)
    x, v = grid.axis_nodes(0), grid.axis_nodes(1)
    hx, hv = grid.spacing
    u = np.broadcast_to(np.exp(-0.5 * v ** 2) / np.sqrt(TWO_PI), grid.shape).copy()
    out = {0.0: GridField(grid, u.copy())}
    half_x = (0.5 * dt / hx) * v[None, :]
    full_v = (dt / hv) * np.sin(x)[:, None]
    for k in range(1, max(wanted, default=0) + 1):
        u = shift_axis(u, 0, half_x, True)
        u = shift_axis(u, 1, full_v, True)
        u = shift_axis(u, 0, half_x, True)
        if k in wanted:
            out[wanted[k]] = GridField(grid, u.copy())
    return out


def grid_mass(field: GridField) -> float:
    return float(field.values.sum() * np.prod(field.grid.spacing))
