"""Dense float64 vector helpers and addressable random streams.

Parameter and gradient vectors are plain 1-D ``numpy`` arrays of dtype
float64. The helpers here only add the dimension contracts the rest of the
package relies on.
"""

from __future__ import annotations

import hashlib

import numpy as np


class ContractViolation(ValueError):
    """A precondition of an operation was not met."""


def as_vector(values) -> np.ndarray:
    """Return ``values`` as a fresh 1-D float64 array."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ContractViolation(f"expected a 1-D vector, got shape {arr.shape}")
    return arr


def _check_dims(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise ContractViolation(f"dimension mismatch: {x.shape} vs {y.shape}")


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return ``a * x + y`` as a new array."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_dims(x, y)
    return a * x + y


def hadamard(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_dims(x, y)
    return x * y


def l2_norm_sq(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.dot(x, x))


def digest(x: np.ndarray) -> str:
    """Short content hash of a vector, used to audit which parameters a gradient saw."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    return hashlib.blake2b(arr.tobytes(), digest_size=12).hexdigest()


class RngStream:
    """Seeded Philox stream addressed by ``(seed, *stream_ids)``.

    Two streams with the same address produce the same draws on every
    platform; streams with different addresses are statistically
    independent. Child streams are derived with :meth:`child`, so a worker
    or an iteration can own its generator without sharing a sequential
    stream with anyone else.
    """

    def __init__(self, seed: int, *stream: int):
        if seed < 0:
            raise ContractViolation("seed must be non-negative")
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, *stream: int) -> "RngStream":
        return RngStream(self.seed, *self.stream, *stream)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def draw_uniform(rng: RngStream, lo: float, hi: float) -> float:
    """One draw from ``[lo, hi)``; a degenerate interval returns ``lo`` without consuming."""
    if lo > hi:
        raise ContractViolation(f"empty interval [{lo}, {hi})")
    if lo == hi:
        return float(lo)
    return float(lo + (hi - lo) * rng.generator.random())
