"""Backward characteristic feet, periodic wrapping and the diffusion stencil."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

CONSTANT = "constant"
CLOSED_FORM = "closed_form"
GENERIC = "generic"


class NonFiniteFieldError(FloatingPointError):
    pass


@dataclass(frozen=True)
class AdvectionField:
    """Velocity ``a(t, x, mu)`` plus the solver branch used to trace it.

    ``velocity`` always has the signature ``(t, x, mu) -> (K, d)`` with
    ``x`` of shape ``(K, d)`` and ``mu`` of shape ``(K, p)``.  For the
    closed-form branch, ``flow(s, t, x, mu)`` returns the exact position at
    time ``s`` of the characteristic through ``x`` at time ``t``.
    """

    kind: str
    space_dim: int
    velocity: Callable
    flow: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in (CONSTANT, CLOSED_FORM, GENERIC):
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.kind == CLOSED_FORM and self.flow is None:
            raise ValueError("closed-form fields need a flow map")

    @classmethod
    def constant(cls, value, space_dim):
        """``value`` is a vector, or a callable of ``mu`` returning ``(K, d)``."""
        if callable(value):
            fn = value
        else:
            vec = np.broadcast_to(np.asarray(value, dtype=np.float64), (space_dim,)).copy()
            fn = lambda mu: np.broadcast_to(vec, (mu.shape[0], space_dim))  # noqa: E731
        return cls(CONSTANT, space_dim, lambda t, x, mu: fn(mu))

    @classmethod
    def closed_form(cls, velocity, flow, space_dim):
        return cls(CLOSED_FORM, space_dim, velocity, flow)

    @classmethod
    def generic(cls, velocity, space_dim):
        return cls(GENERIC, space_dim, velocity)

    def as_generic(self) -> "AdvectionField":
        """Same velocity, traced numerically with RK4."""
        return AdvectionField(GENERIC, self.space_dim, self.velocity)


@dataclass(frozen=True)
class FlowConfig:
    n_tau: int = 1
    order: int = 4

    def __post_init__(self):
        if self.n_tau < 1:
            raise ValueError("n_tau must be >= 1")
        if self.order != 4:
            raise ValueError("only the RK4 characteristic solver is available")


@dataclass(frozen=True)
class Domain:
    """Axis-aligned bounding box with per-axis boundary modes.

    ``shape`` selects the membership test: ``box``, ``disk`` (unit disk in
    the first two coordinates) or ``cylinder`` (unit disk times an interval).
    """

    lower: tuple
    extent: tuple
    periodic: tuple
    shape: str = "box"

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        ext = tuple(float(v) for v in np.atleast_1d(self.extent))
        per = np.atleast_1d(self.periodic)
        if per.size == 1:
            per = np.repeat(per, len(lo))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "extent", ext)
        object.__setattr__(self, "periodic", tuple(bool(p) for p in per))
        if not (len(lo) == len(ext) == len(self.periodic)):
            raise ValueError("lower, extent and periodic must have one entry per axis")
        if any(e <= 0 for e in ext):
            raise ValueError("domain extent must be positive on every axis")
        if self.shape not in ("box", "disk", "cylinder"):
            raise ValueError(f"unknown domain shape {self.shape!r}")

    @classmethod
    def box(cls, lower, upper, periodic=False):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        return cls(tuple(lower), tuple(upper - lower), periodic)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def upper(self):
        return tuple(l + e for l, e in zip(self.lower, self.extent))

    @property
    def volume(self) -> float:
        box = float(np.prod(self.extent))
        if self.shape == "box":
            return box
        # unit disk cross-section inside the [-1, 1]^2 bounding square
        return box * np.pi / 4.0

    def contains(self, x):
        x = np.atleast_2d(x)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        inside = np.all((x >= lo) & (x <= hi), axis=1)
        if self.shape in ("disk", "cylinder"):
            inside &= x[:, 0] ** 2 + x[:, 1] ** 2 <= 1.0
        return inside


def wrap_periodic(domain: Domain, x):
    """Map periodic coordinates into ``[lower, lower + extent)``."""
    x = np.array(x, dtype=np.float64, copy=True)
    lo = np.asarray(domain.lower)
    ext = np.asarray(domain.extent)
    for i, per in enumerate(domain.periodic):
        if not per:
            continue
        r = np.mod(x[..., i] - lo[i], ext[i])
        r = np.where(r >= ext[i], 0.0, r)
        x[..., i] = lo[i] + r
    return x


def _as_batch(x, mu, d):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = x.reshape(-1, d)
    if mu is None:
        mu = np.zeros((x.shape[0], 0))
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim == 1:
        mu = np.broadcast_to(mu, (x.shape[0], mu.size))
    return x, mu, single


def _checked(v):
    if not np.all(np.isfinite(v)):
        raise NonFiniteFieldError("advection field returned non-finite values")
    return v


def foot(field: AdvectionField, t_n, t_np1, x, mu=None, cfg: FlowConfig = FlowConfig()):
    """Foot at time ``t_n`` of the characteristic through ``x`` at ``t_np1``."""
    if not t_np1 > t_n:
        raise ValueError("t_np1 must be later than t_n")
    x, mu, single = _as_batch(x, mu, field.space_dim)
    dt = t_np1 - t_n
    if field.kind == CONSTANT:
        out = x - dt * _checked(np.asarray(field.velocity(t_np1, x, mu)))
    elif field.kind == CLOSED_FORM:
        out = _checked(np.asarray(field.flow(t_n, t_np1, x, mu), dtype=np.float64))
    else:
        out = _rk4_backward(field.velocity, t_np1, dt, x, mu, cfg.n_tau)
    return out[0] if single else out


def _rk4_backward(a, t_start, dt, x, mu, n_tau):
    h = dt / n_tau
    X = x.copy()
    for i in range(n_tau):
        tau = t_start - i * h
        k1 = _checked(a(tau, X, mu))
        k2 = _checked(a(tau - 0.5 * h, X - 0.5 * h * k1, mu))
        k3 = _checked(a(tau - 0.5 * h, X - 0.5 * h * k2, mu))
        k4 = _checked(a(tau - h, X - h * k3, mu))
        X = X - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return X


def diffusion_directions(d):
    """The ``2d`` unit directions ``e_1..e_d, -e_1..-e_d``."""
    eye = np.eye(d)
    return np.concatenate([eye, -eye])


def diffusion_offset(sigma, dt, d):
    return np.sqrt(2.0 * d * sigma * dt)


def diffusion_feet(base_foot, sigma, dt, d=None):
    """Shift ``base_foot`` by ``sqrt(2 d sigma dt)`` along each stencil direction.

    Returns an array of shape ``(2d, *base_foot.shape)``.
    """
    if sigma <= 0 or dt <= 0:
        raise ValueError("diffusion feet need sigma > 0 and dt > 0")
    base = np.asarray(base_foot, dtype=np.float64)
    d = base.shape[-1] if d is None else d
    r = diffusion_offset(sigma, dt, d)
    V = diffusion_directions(d)
    return base[None, ...] + r * V.reshape((2 * d,) + (1,) * (base.ndim - 1) + (d,))
