"""Dense linear solves and reproducible random streams."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg


class SolveError(np.linalg.LinAlgError):
    """Raised when a damped system is not positive-definite."""


def spd_solve(A, b, damping=0.0):
    """Solve ``(A + damping * I) x = b`` for symmetric ``A``.

    Uses a Cholesky factorization.  When ``damping > 0`` and the
    factorization still fails (numerically rank-deficient ``A``), the
    system is solved through a symmetric eigendecomposition instead.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"rhs length {b.shape[0]} does not match matrix size {A.shape[0]}")
    if damping < 0:
        raise ValueError("damping must be nonnegative")
    M = A + damping * np.eye(A.shape[0])
    try:
        c = linalg.cho_factor(M, lower=True, check_finite=True)
        return linalg.cho_solve(c, b)
    except linalg.LinAlgError:
        if damping <= 0:
            raise SolveError("matrix is not positive-definite and no damping was given")
    # pseudo-inverse fallback on the damped, symmetrized system
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    tol = max(w.max(), 0.0) * M.shape[0] * np.finfo(float).eps
    inv = np.where(w > tol, 1.0 / np.where(w > tol, w, 1.0), 0.0)
    return V @ (inv[:, None] * (V.T @ b)) if b.ndim == 2 else V @ (inv * (V.T @ b))


@dataclass
class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_index)``.

    Two streams with the same key produce identical sequences; distinct
    stream indices give independent Philox keys.
    """

    seed: int
    stream_index: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_index & 0xFFFFFFFFFFFFFFFF],
                       dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def spawn(self, index: int) -> "RngStream":
        """Derive an independent stream for sub-task ``index``."""
        return RngStream(self.seed, (self.stream_index + 1) * 1_000_003 + index)

    def uniform(self, n, lo=0.0, hi=1.0):
        return rng_uniform(self, n, lo, hi)


def rng_uniform(stream: RngStream, n, lo=0.0, hi=1.0):
    """Draw ``n`` values uniformly in ``[lo, hi)``; ``n`` may be a shape tuple."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if np.any(lo >= hi):
        raise ValueError("uniform draw needs lo < hi")
    u = stream.generator.random(n)
    out = lo + (hi - lo) * u
    # guard the open upper end against rounding
    return np.minimum(out, np.nextafter(hi, lo))
