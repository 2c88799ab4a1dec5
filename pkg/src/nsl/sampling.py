"""Uniform and adaptive collocation sampling over space times parameters."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .characteristics import Domain
from .network import NetworkSpec, input_gradient
from .numerics import RngStream, rng_uniform

ACCEPT_THRESHOLD = 0.75
CANDIDATE_FACTOR = 10
MIN_ACCEPTANCE = 0.01


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParamSpace:
    lower: tuple = ()
    upper: tuple = ()

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise ValueError("parameter bounds have different lengths")
        if any(l >= h for l, h in zip(lo, hi)):
            raise ValueError("parameter bounds need lower < upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, mu):
        mu = np.asarray(mu).reshape(-1, self.dim)
        return np.all((mu >= self.lower) & (mu <= self.upper), axis=1)


@dataclass
class SampleBatch:
    points: np.ndarray
    params: np.ndarray
    # pass index (0, 1, 2) for adaptively accepted points, -1 for uniform fill
    origin: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def inputs(self):
        return np.hstack([self.points, self.params])

    def take(self, idx) -> "SampleBatch":
        origin = None if self.origin is None else self.origin[idx]
        return SampleBatch(self.points[idx], self.params[idx], origin)

    @staticmethod
    def concat(batches) -> "SampleBatch":
        batches = list(batches)
        origin = None
        if any(b.origin is not None for b in batches):
            origin = np.concatenate([b.origin if b.origin is not None else np.full(b.count, -1)
                                     for b in batches])
        return SampleBatch(np.concatenate([b.points for b in batches]),
                           np.concatenate([b.params for b in batches]), origin)


@dataclass(frozen=True)
class AdaptiveConfig:
    sigmas: tuple = (0.5, 10.0, 500.0)
    threshold: float = ACCEPT_THRESHOLD
    candidate_factor: int = CANDIDATE_FACTOR
    cap_fraction: float = 0.25

    def __post_init__(self):
        s = tuple(float(v) for v in self.sigmas)
        if len(s) != 3 or any(v <= 0 for v in s):
            raise ValueError("adaptive sampling needs three positive widths")
        if not (s[0] <= s[1] <= s[2]):
            raise ValueError("adaptive widths must be nondecreasing")
        object.__setattr__(self, "sigmas", s)


def _uniform_points(domain: Domain, n, rng: RngStream):
    lo = np.asarray(domain.lower)
    hi = np.asarray(domain.upper)
    if domain.shape == "box":
        return rng_uniform(rng, (n, domain.dim), lo, hi)
    out = []
    have = 0
    drawn = 0
    while have < n:
        m = max(2 * (n - have), 64)
        cand = rng_uniform(rng, (m, domain.dim), lo, hi)
        keep = cand[domain.contains(cand)]
        drawn += m
        out.append(keep)
        have += keep.shape[0]
        if drawn >= 1000 and have < MIN_ACCEPTANCE * drawn:
            raise SamplingError("rejection sampling acceptance fell below 1%")
    return np.concatenate(out)[:n]


def uniform_sample(domain: Domain, pspace: ParamSpace, n, rng: RngStream) -> SampleBatch:
    """``n`` points uniform over the domain, paired with uniform parameters."""
    if n < 1:
        raise ValueError("need at least one sample")
    pts = _uniform_points(domain, n, rng)
    if pspace.dim:
        mu = rng_uniform(rng, (n, pspace.dim), np.asarray(pspace.lower), np.asarray(pspace.upper))
    else:
        mu = np.zeros((n, 0))
    return SampleBatch(pts, mu)


def adaptive_sample(domain: Domain, pspace: ParamSpace, n, focus, cfg: AdaptiveConfig,
                    rng: RngStream) -> SampleBatch:
    """Rejection-style sampling concentrated near the zeros of ``focus``.

    Each of the three passes draws ``10 n`` uniform candidates, weights them
    by ``exp(-f^2 / (2 sigma^2))`` and keeps up to ``n / 4`` of those whose
    weight exceeds the threshold, chosen uniformly among qualifiers.  The
    batch is then topped up with uniform points to exactly ``n``.
    """
    if n < 4:
        raise ValueError("adaptive sampling needs n >= 4")
    cap = int(n * cfg.cap_fraction)
    parts = []
    total = 0
    for k, sigma in enumerate(cfg.sigmas):
        cand = uniform_sample(domain, pspace, cfg.candidate_factor * n, rng)
        f = np.asarray(focus(cand.points, cand.params), dtype=np.float64)
        omega = np.exp(-(f * f) / (2.0 * sigma * sigma))
        ok = np.flatnonzero(omega > cfg.threshold)
        m = min(cap, ok.size, n - total)
        if m > 0:
            pick = np.sort(rng.generator.choice(ok, size=m, replace=False))
            chosen = cand.take(pick)
            chosen.origin = np.full(m, k)
            parts.append(chosen)
            total += m
    if total < n:
        fill = uniform_sample(domain, pspace, n - total, rng)
        fill.origin = np.full(fill.count, -1)
        parts.append(fill)
    return SampleBatch.concat(parts)


def acceptance_bound(sigma, threshold=ACCEPT_THRESHOLD):
    """Largest ``|f|`` an accepted point can have for pass width ``sigma``."""
    return sigma * np.sqrt(-2.0 * np.log(threshold))


def gradient_focus(spec: NetworkSpec, theta, model=None):
    """Focus ``1 / (1e-2 + |grad u|^2)``, small where the solution is steep.

    ``model`` optionally supplies ``input_gradient(X)`` for wrapped models;
    by default the raw network gradient is used.
    """
    theta = np.array(theta, dtype=np.float64, copy=True)

    def f(x, mu):
        X = np.hstack([np.atleast_2d(x), np.asarray(mu).reshape(len(np.atleast_2d(x)), -1)])
        g = model.input_gradient(theta, X) if model is not None else input_gradient(spec, theta, X)
        return 1.0 / (1e-2 + np.sum(g * g, axis=1))

    return f
