"""Numeric substrate: seeded RNG streams, logsumexp, central differences.

All arithmetic is float64. Random streams come from numpy's PCG64 bit
generator; a run has one root seed and every consumer (data, init, shuffle,
...) gets its own child stream keyed by name, so results do not depend on the
order in which consumers draw.
"""

from __future__ import annotations

import zlib
from typing import Callable

import numpy as np

RNG_ALGORITHM = "PCG64"


class NonFiniteError(ValueError):
    """A function evaluation or array entry was NaN or infinite."""

    def __init__(self, message: str, index=None):
        super().__init__(message)
        self.index = index


def make_rng(seed: int, stream: str | None = None) -> np.random.Generator:
    """Return a PCG64 generator for ``seed``, optionally split by stream name.

    The stream name is hashed with CRC32 into the seed sequence spawn key, so
    ``make_rng(42, "data")`` is the same stream on every run and platform.
    """
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    spawn_key = () if stream is None else (zlib.crc32(stream.encode("utf-8")),)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=spawn_key)))


def as_matrix(data, rows: int | None = None, cols: int | None = None, allow_nonfinite: bool = False) -> np.ndarray:
    """Coerce ``data`` to a C-contiguous float64 2-D array and validate it."""
    arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise ValueError(f"expected {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise ValueError(f"expected {cols} cols, got {arr.shape[1]}")
    if not allow_nonfinite:
        check_finite(arr, "matrix")
    return arr


def check_finite(arr: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NonFiniteError(f"{what} has a non-finite entry at index {idx}", index=idx)


def logsumexp(v, axis: int | None = None):
    """log(sum(exp(v))) with max-shift stabilization.

    A single-element input returns that element exactly.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("logsumexp of an empty input")
    if axis is None:
        v = v.ravel()
        if v.size == 1:
            return float(v[0])
        m = v.max()
        return float(m + np.log(np.exp(v - m).sum()))
    m = v.max(axis=axis, keepdims=True)
    out = m + np.log(np.exp(v - m).sum(axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector.

    Returns ``(f(x + h e_i) - f(x - h e_i)) / (2h)`` for every coordinate.
    Raises NonFiniteError naming the coordinate if any evaluation is not finite.
    """
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    x = np.array(x, dtype=np.float64).ravel()
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + h
        fp = float(f(x.copy()))
        x[i] = orig - h
        fm = float(f(x.copy()))
        x[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"non-finite function value at coordinate {i}", index=i)
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-12) -> float:
    """Norm-wise relative error ``max|a - n| / max(max|n|, max|a|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.abs(n).max(initial=0.0), np.abs(a).max(initial=0.0), floor)
    return float(np.abs(a - n).max(initial=0.0) / scale)
