"""Grid-based semi-Lagrangian baseline with directionwise cubic Lagrange shifts."""
from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .characteristics import CONSTANT, diffusion_offset
from .metrics import ErrorReport, relative_error

MEMORY_CAP = 200_000_000


class GridBudgetError(MemoryError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid; periodic axes exclude the upper bound, clamped ones include it."""

    dim: int
    n_x: int
    lower: tuple
    upper: tuple
    periodic: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.broadcast_to(self.lower, (self.dim,)))
        hi = tuple(float(v) for v in np.broadcast_to(self.upper, (self.dim,)))
        per = tuple(bool(v) for v in np.broadcast_to(self.periodic, (self.dim,)))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "periodic", per)
        if self.n_x < 4:
            raise ValueError("cubic stencils need at least 4 points per axis")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("grid bounds need lower < upper")

    @property
    def spacing(self):
        return tuple((h - l) / (self.n_x if p else self.n_x - 1)
                     for l, h, p in zip(self.lower, self.upper, self.periodic))

    @property
    def size(self) -> int:
        return self.n_x ** self.dim

    @property
    def shape(self):
        return (self.n_x,) * self.dim

    def axis_nodes(self, axis):
        return self.lower[axis] + self.spacing[axis] * np.arange(self.n_x)

    def mesh(self):
        """Node coordinates, shape ``(n_x, ..., n_x, dim)``."""
        axes = [self.axis_nodes(i) for i in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass
class GridField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(self.grid.shape)

    @property
    def flat(self):
        return self.values.reshape(-1)

    def dump(self, path):
        header = {"dim": self.grid.dim, "n_x": self.grid.n_x, "lower": list(self.grid.lower),
                  "upper": list(self.grid.upper), "periodic": list(self.grid.periodic)}
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        data = Path(path).read_bytes()
        if not data.startswith(_MAGIC):
            raise ValueError(f"{path} is not a grid dump")
        rest = data[len(_MAGIC):]
        nl = rest.index(b"\n")
        h = json.loads(rest[:nl])
        grid = Grid(h["dim"], h["n_x"], tuple(h["lower"]), tuple(h["upper"]), tuple(h["periodic"]))
        return cls(grid, np.frombuffer(rest[nl + 1:], dtype="<f8").copy())


_MAGIC = b"NSLGRID1\n"


def lagrange3_weights(s):
    """Weights of the 4-node cubic on nodes ``{-1, 0, 1, 2}`` at offset ``s``."""
    s = np.asarray(s, dtype=np.float64)
    return np.stack([-s * (s - 1.0) * (s - 2.0) / 6.0,
                     (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
                     -(s + 1.0) * s * (s - 2.0) / 2.0,
                     (s + 1.0) * s * (s - 1.0) / 6.0])


def lagrange3_interp(node_values, s):
    """Cubic through values at nodes ``0, 1, 2, 3`` evaluated at ``s``."""
    v = np.asarray(node_values, dtype=np.float64)
    if v.shape[0] != 4:
        raise ValueError("need exactly four node values")
    w = lagrange3_weights(float(s) - 1.0)
    out = np.tensordot(w, v, axes=(0, 0))
    return float(out) if v.ndim == 1 else out


def shift_axis(u, axis, disp, periodic):
    """Semi-Lagrangian shift along ``axis``: ``new[j] = old(j - disp)`` in node units.

    ``disp`` is a scalar or an array broadcastable to ``u`` with length one
    along ``axis`` (a different shift for each grid line).  Clamped axes
    repeat the boundary node values outside the grid.
    """
    u = np.asarray(u, dtype=np.float64)
    n = u.shape[axis]
    disp = np.asarray(disp, dtype=np.float64)
    if disp.ndim == 0:
        if disp == 0.0:
            return u.copy()
        i0 = int(np.floor(-disp))
        w = lagrange3_weights(-disp - i0)
        j = np.arange(n)
        out = np.zeros_like(u)
        for k in range(4):
            idx = j + i0 + k - 1
            idx = np.mod(idx, n) if periodic else np.clip(idx, 0, n - 1)
            out += w[k] * np.take(u, idx, axis=axis)
        return out
    um = np.moveaxis(u, axis, 0)
    dm = np.moveaxis(np.broadcast_to(disp, u.shape[:axis] + (1,) + u.shape[axis + 1:]), axis, 0)
    shape_j = (n,) + (1,) * (u.ndim - 1)
    p = np.arange(n, dtype=np.float64).reshape(shape_j) - dm
    i = np.floor(p)
    w = lagrange3_weights(p - i)
    i = i.astype(np.int64)
    out = np.zeros(um.shape)
    for k in range(4):
        idx = i + k - 1
        idx = np.mod(idx, n) if periodic else np.clip(idx, 0, n - 1)
        out += w[k] * np.take_along_axis(um, np.broadcast_to(idx, um.shape), axis=0)
    return np.moveaxis(out, 0, axis)


def sl_sweep_step(field: GridField, velocity, sigma, dt) -> GridField:
    """One step: directionwise advection by ``velocity * dt`` then diffusion.

    Diffusion averages the ``2d`` copies shifted by ``+-sqrt(2 d sigma dt)``
    along each axis, the grid counterpart of the ``2d`` characteristic feet.
    """
    grid = field.grid
    u = field.values
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("grid field contains non-finite values")
    vel = np.broadcast_to(np.asarray(velocity, dtype=np.float64), (grid.dim,))
    h = grid.spacing
    for ax in range(grid.dim):
        if vel[ax] != 0.0:
            u = shift_axis(u, ax, vel[ax] * dt / h[ax], grid.periodic[ax])
    if sigma > 0:
        r = diffusion_offset(sigma, dt, grid.dim)
        acc = np.zeros_like(u)
        for ax in range(grid.dim):
            acc += shift_axis(u, ax, r / h[ax], grid.periodic[ax])
            acc += shift_axis(u, ax, -r / h[ax], grid.periodic[ax])
        u = acc / (2 * grid.dim)
    elif u is field.values:
        u = u.copy()
    return GridField(grid, u)


def grid_for(scenario, n_x) -> Grid:
    dom = scenario.domain
    return Grid(dom.dim, n_x, dom.lower, dom.upper, dom.periodic)


def sl_run(scenario, n_x, n_t, memory_cap=MEMORY_CAP):
    """Run the grid scheme on a constant-velocity scenario; returns ``(field, ErrorReport)``."""
    if scenario.field.kind != CONSTANT or scenario.pspace.dim:
        raise ValueError("the grid baseline needs a constant, parameter-free velocity")
    if scenario.domain.shape != "box":
        raise ValueError("the grid baseline needs a box domain")
    grid = grid_for(scenario, n_x)
    if grid.size > memory_cap:
        raise GridBudgetError(f"{n_x}^{grid.dim} = {grid.size} values exceeds the cap of {memory_cap}")
    t0 = time.perf_counter()
    d = grid.dim
    vel = np.asarray(scenario.field.velocity(0.0, np.zeros((1, d)), np.zeros((1, 0))))[0]
    pts = grid.mesh().reshape(-1, d)
    noparam = np.zeros((pts.shape[0], 0))
    f = GridField(grid, scenario.u0(pts, noparam))
    dt = scenario.final_time / n_t
    for _ in range(n_t):
        f = sl_sweep_step(f, vel, scenario.sigma, dt)
    exact = scenario.exact(scenario.final_time, pts, noparam)
    rep = relative_error(f.flat, exact, kind="grid")
    rep.wall_ms = 1e3 * (time.perf_counter() - t0)
    return f, rep


def grid_interpolate(field: GridField, points):
    """Tensor-product cubic Lagrange interpolation of a grid field at ``points``."""
    grid = field.grid
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = grid.n_x
    idx_w = []
    for ax in range(grid.dim):
        p = (pts[:, ax] - grid.lower[ax]) / grid.spacing[ax]
        i = np.floor(p)
        w = lagrange3_weights(p - i)
        i = i.astype(np.int64)
        ids = np.stack([i + k - 1 for k in range(4)])
        ids = np.mod(ids, n) if grid.periodic[ax] else np.clip(ids, 0, n - 1)
        idx_w.append((ids, w))
    out = np.zeros(pts.shape[0])
    strides = [n ** (grid.dim - 1 - ax) for ax in range(grid.dim)]
    flat = field.flat
    for combo in itertools.product(range(4), repeat=grid.dim):
        lin = np.zeros(pts.shape[0], dtype=np.int64)
        w = np.ones(pts.shape[0])
        for ax, k in enumerate(combo):
            ids, ww = idx_w[ax]
            lin += ids[k] * strides[ax]
            w *= ww[k]
        out += w * flat[lin]
    return out
