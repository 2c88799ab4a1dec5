"""Fully-connected scalar networks with hand-written reverse mode.

Parameters live in one flat float64 vector.  Layer ``l`` stores its weight
matrix (``fan_out x fan_in``, row-major) followed by its bias.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import RngStream

_HAT_SCALE = 12.0


class ActivationKind(str, enum.Enum):
    TANH = "tanh"
    SIN = "sin"
    REGULARIZED_HAT = "hat"

    @classmethod
    def parse(cls, value) -> "ActivationKind":
        if isinstance(value, cls):
            return value
        aliases = {"tanh": cls.TANH, "sin": cls.SIN, "hat": cls.REGULARIZED_HAT,
                   "regularized_hat": cls.REGULARIZED_HAT, "regularizedhat": cls.REGULARIZED_HAT}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown activation {value!r}") from None


def _act(kind, z):
    if kind is ActivationKind.TANH:
        return np.tanh(z)
    if kind is ActivationKind.SIN:
        return np.sin(z)
    return np.exp(-_HAT_SCALE * np.tanh(0.5 * z * z))


def _act_and_grad(kind, z):
    if kind is ActivationKind.TANH:
        a = np.tanh(z)
        return a, 1.0 - a * a
    if kind is ActivationKind.SIN:
        return np.sin(z), np.cos(z)
    t = np.tanh(0.5 * z * z)
    a = np.exp(-_HAT_SCALE * t)
    return a, -_HAT_SCALE * a * (1.0 - t * t) * z


def activation_eval(kind, x):
    """Evaluate an activation function elementwise."""
    return _act(ActivationKind.parse(kind), np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    layer_sizes: tuple
    activation: ActivationKind = ActivationKind.TANH

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(w) for w in self.layer_sizes))
        object.__setattr__(self, "activation", ActivationKind.parse(self.activation))
        if self.input_dim < 1 or any(w < 1 for w in self.layer_sizes):
            raise ValueError("all layer widths must be >= 1")

    @property
    def widths(self):
        return (self.input_dim, *self.layer_sizes, 1)

    @property
    def dof_count(self) -> int:
        w = self.widths
        return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))

    def slices(self):
        """Yield ``(weight_slice, bias_slice, fan_in, fan_out)`` per layer."""
        w = self.widths
        off = 0
        for i in range(len(w) - 1):
            fi, fo = w[i], w[i + 1]
            ws = slice(off, off + fi * fo)
            off += fi * fo
            bs = slice(off, off + fo)
            off += fo
            yield ws, bs, fi, fo

    def unpack(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dof_count,):
            raise ValueError(f"parameter vector has shape {theta.shape}, expected ({self.dof_count},)")
        return [(theta[ws].reshape(fo, fi), theta[bs]) for ws, bs, fi, fo in self.slices()]


def init_params(spec: NetworkSpec, rng: RngStream):
    """Glorot-uniform weights, zero biases."""
    theta = np.zeros(spec.dof_count)
    for ws, _, fi, fo in spec.slices():
        bound = np.sqrt(6.0 / (fi + fo))
        theta[ws] = rng.generator.uniform(-bound, bound, size=fi * fo)
    return theta


def _check_batch(spec, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None] if spec.input_dim == 1 else X[None, :]
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(f"batch has shape {X.shape}, expected (K, {spec.input_dim})")
    return X


def forward(spec: NetworkSpec, theta, X):
    """Network output at each row of ``X``; returns shape ``(K,)``."""
    X = _check_batch(spec, X)
    layers = spec.unpack(theta)
    a = X
    for W, b in layers[:-1]:
        a = _act(spec.activation, a @ W.T + b)
    W, b = layers[-1]
    return (a @ W.T + b)[:, 0]


def _tape(spec, theta, X):
    layers = spec.unpack(theta)
    acts, grads = [X], []
    a = X
    for W, b in layers[:-1]:
        a, g = _act_and_grad(spec.activation, a @ W.T + b)
        acts.append(a)
        grads.append(g)
    W, b = layers[-1]
    out = (a @ W.T + b)[:, 0]
    return layers, acts, grads, out


def forward_and_jacobian(spec: NetworkSpec, theta, X):
    """Return outputs ``(K,)`` and the parameter Jacobian ``(K, N)``."""
    X = _check_batch(spec, X)
    layers, acts, grads, out = _tape(spec, theta, X)
    K = X.shape[0]
    J = np.empty((K, spec.dof_count))
    sl = list(spec.slices())
    delta = np.ones((K, 1))
    for li in range(len(layers) - 1, -1, -1):
        ws, bs, fi, fo = sl[li]
        a_in = acts[li]
        J[:, ws] = (delta[:, :, None] * a_in[:, None, :]).reshape(K, fo * fi)
        J[:, bs] = delta
        if li > 0:
            delta = (delta @ layers[li][0]) * grads[li - 1]
    return out, J


def param_jacobian(spec: NetworkSpec, theta, X):
    """Gradient of the output with respect to every parameter, one row per input."""
    return forward_and_jacobian(spec, theta, X)[1]


def input_gradient(spec: NetworkSpec, theta, X):
    """Gradient of the output with respect to the inputs, shape ``(K, input_dim)``."""
    X = _check_batch(spec, X)
    layers, acts, grads, _ = _tape(spec, theta, X)
    delta = np.ones((X.shape[0], 1))
    for li in range(len(layers) - 1, 0, -1):
        delta = (delta @ layers[li][0]) * grads[li - 1]
    return delta @ layers[0][0]


_MAGIC = b"NSLPARAM1\n"


def save_params(path, spec: NetworkSpec, theta):
    """Write a checkpoint: magic line, JSON header line, little-endian doubles."""
    theta = np.asarray(theta, dtype="<f8")
    header = {"input_dim": spec.input_dim, "layer_sizes": list(spec.layer_sizes),
              "activation": spec.activation.value, "dof_count": spec.dof_count}
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(theta.tobytes())


def load_params(path):
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise ValueError(f"{path} is not a parameter checkpoint")
    rest = data[len(_MAGIC):]
    nl = rest.index(b"\n")
    header = json.loads(rest[:nl])
    spec = NetworkSpec(header["input_dim"], header["layer_sizes"], header["activation"])
    theta = np.frombuffer(rest[nl + 1:], dtype="<f8").astype(np.float64)
    if theta.size != spec.dof_count:
        raise ValueError("checkpoint is truncated")
    return spec, theta
