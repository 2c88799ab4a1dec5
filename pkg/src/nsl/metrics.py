"""Relative error norms, level-set volumes and convergence slopes."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .numerics import RngStream, rng_uniform


@dataclass
class ErrorReport:
    e_l2: float
    e_linf: float
    n_probe: int
    kind: str = "monte_carlo"
    wall_ms: float = 0.0

    def as_dict(self):
        return asdict(self)


def relative_error(approx, exact, probes=None, kind="monte_carlo", norm="pointwise"):
    """Relative L2 / Linf errors.

    ``approx`` and ``exact`` are value arrays, or callables evaluated at
    ``probes`` (an array of inputs or a ``SampleBatch``).  With
    ``norm="pointwise"`` the errors are the root-mean-square and maximum of
    ``|u - u_ex| / |u_ex|``; with ``norm="global"`` they are
    ``||u - u_ex|| / ||u_ex||`` in the discrete 2-norm and max-norm, which
    stays meaningful where the exact solution approaches zero.
    """
    if callable(approx) or callable(exact):
        X = probes.inputs if hasattr(probes, "inputs") else probes
        approx = approx(X) if callable(approx) else approx
        exact = exact(X) if callable(exact) else exact
    u = np.asarray(approx, dtype=np.float64).reshape(-1)
    ue = np.asarray(exact, dtype=np.float64).reshape(-1)
    if u.shape != ue.shape:
        raise ValueError("approximate and exact values differ in length")
    if u.size == 0:
        raise ValueError("no probes")
    diff = u - ue
    if norm == "pointwise":
        if np.any(ue == 0.0):
            raise ZeroDivisionError("exact solution vanishes at a probe")
        rel = diff / ue
        return ErrorReport(float(np.sqrt(np.mean(rel * rel))), float(np.max(np.abs(rel))), u.size, kind)
    if norm == "global":
        return ErrorReport(float(np.linalg.norm(diff) / np.linalg.norm(ue)),
                           float(np.max(np.abs(diff)) / np.max(np.abs(ue))), u.size, kind)
    raise ValueError(f"unknown norm {norm!r}")


def volume_negative(u, domain, n_probe, rng: RngStream, batch=200_000):
    """Monte-Carlo volume of ``{u < 0}`` inside ``domain``.

    ``u`` maps an ``(n, d)`` array of points to values.
    """
    if n_probe < 1000:
        raise ValueError("volume estimates need at least 1000 probes")
    lo = np.asarray(domain.lower)
    hi = np.asarray(domain.upper)
    box = float(np.prod(hi - lo))
    neg = 0
    done = 0
    while done < n_probe:
        m = min(batch, n_probe - done)
        x = rng_uniform(rng, (m, domain.dim), lo, hi)
        vals = np.asarray(u(x))
        neg += int(np.count_nonzero((vals < 0) & domain.contains(x)))
        done += m
    return box * neg / n_probe


def convergence_slope(pairs):
    """Least-squares slope of ``log(error)`` against ``log(n)``."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise ValueError("need at least three (n, error) pairs")
    if np.any(arr <= 0):
        raise ValueError("steps and errors must be positive")
    x = np.log(arr[:, 0])
    y = np.log(arr[:, 1])
    return float(np.polyfit(x, y, 1)[0])
