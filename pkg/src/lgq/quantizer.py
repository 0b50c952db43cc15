"""Straight-through soft-to-hard quantization.

The forward value of a quantized token is the selected codebook row. Gradients
are taken as if the token were the soft average sum_k p_k c_k; the hard/soft
residual is treated as a constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import AssignmentMatrix, backprop_probs
from .numerics import as_matrix


@dataclass
class QuantizeResult:
    indices: np.ndarray       # length T, int64
    hard_tokens: np.ndarray   # T x C, rows of the codebook
    soft_average: np.ndarray  # T x C, or None for quantizers without a soft path

    def ste_tokens(self) -> np.ndarray:
        """soft + (hard - soft), evaluated literally."""
        return self.soft_average + (self.hard_tokens - self.soft_average)


def argmax_lowest(probs: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index, i.e. ties go to the lowest code
    return np.argmax(probs, axis=1).astype(np.int64)


def quantize(z, centers, assignment: AssignmentMatrix) -> QuantizeResult:
    z = as_matrix(z)
    centers = as_matrix(centers)
    p = assignment.probs
    if p.shape != (z.shape[0], centers.shape[0]) or z.shape[1] != centers.shape[1]:
        raise ValueError(f"shape mismatch: tokens {z.shape}, centers {centers.shape}, probs {p.shape}")
    idx = argmax_lowest(p)
    return QuantizeResult(idx, centers[idx].copy(), p @ centers)


def ste_backward(upstream, z, centers, assignment: AssignmentMatrix):
    """Gradients of the soft path given dL/dz_q (T x C).

    Returns ``(grad_z, grad_centers)``. The center gradient has two parts: the
    explicit factor c_k in the soft average (P^T upstream) and the dependence of
    every p_{t,k} on every center, pulled back through the softmax.
    """
    g = np.asarray(upstream, dtype=np.float64)
    z = as_matrix(z)
    centers = as_matrix(centers)
    if g.shape != z.shape:
        raise ValueError(f"upstream shape {g.shape} != token shape {z.shape}")
    grad_probs = g @ centers.T
    grad_z, grad_c = backprop_probs(grad_probs, z, centers, assignment)
    grad_c += assignment.probs.T @ g
    return grad_z, grad_c


def ste_bias(result: QuantizeResult) -> float:
    """Mean per-token ||hard - soft||, a proxy for the estimator's bias."""
    return float(np.linalg.norm(result.hard_tokens - result.soft_average, axis=1).mean())
