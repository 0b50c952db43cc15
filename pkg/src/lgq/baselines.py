"""Hard nearest-neighbour VQ and finite scalar quantization baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assignment import pairwise_energy
from .losses import LossBreakdown, recon_l1
from .numerics import as_matrix
from .quantizer import QuantizeResult

DEFAULT_BETA = 0.25


def nearest_indices(z, centers) -> np.ndarray:
    """argmin of the euclidean distance; ties go to the lowest index."""
    d = pairwise_energy(z, centers, "squared")
    return np.argmin(d, axis=1).astype(np.int64)


def vq_quantize(z, centers) -> QuantizeResult:
    z = as_matrix(z)
    centers = as_matrix(centers)
    if z.shape[1] != centers.shape[1]:
        raise ValueError(f"token dimension {z.shape[1]} != codebook dimension {centers.shape[1]}")
    idx = nearest_indices(z, centers)
    return QuantizeResult(idx, centers[idx].copy(), None)


@dataclass
class VQGradients:
    z_e: np.ndarray
    centers: np.ndarray
    decoder: np.ndarray | None
    loss: LossBreakdown
    result: QuantizeResult


def vq_gradients(x, z_e, centers, beta: float = DEFAULT_BETA, decoder=None) -> VQGradients:
    """Classical VQ-VAE objective.

    recon(x, dec(z_q)) + ||sg(z_e) - c||^2 + beta ||z_e - sg(c)||^2, with z_q passed
    straight through to z_e. Only selected codes receive a codebook gradient.
    """
    z_e = as_matrix(z_e)
    centers = as_matrix(centers)
    x = as_matrix(x)
    T = z_e.shape[0]
    q = vq_quantize(z_e, centers)
    zq = q.hard_tokens
    x_hat = zq if decoder is None else zq @ decoder.T
    r = zq - z_e
    lm = float((r * r).sum(axis=1).mean())
    loss = LossBreakdown(recon=recon_l1(x, x_hat), latent_match=lm, commit=beta * lm,
                         lambda_peak=0.0, lambda_bins=0.0)
    onehot_marginal = np.bincount(q.indices, minlength=centers.shape[0]) / max(T, 1)
    loss.bins = float(onehot_marginal @ onehot_marginal)
    loss.recompute_total()

    g_xhat = np.sign(x_hat - x) / x.size
    g_zq = g_xhat if decoder is None else g_xhat @ decoder
    grad_z = g_zq - 2.0 * beta * r / T
    grad_c = np.zeros_like(centers)
    np.add.at(grad_c, q.indices, 2.0 * r / T)
    g_dec = None if decoder is None else g_xhat.T @ zq
    return VQGradients(grad_z, grad_c, g_dec, loss, q)


@dataclass(frozen=True)
class FsqSpec:
    levels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
        if not self.levels or any(v < 2 for v in self.levels):
            raise ValueError(f"every FSQ level count must be >= 2, got {self.levels}")

    @property
    def channels(self) -> int:
        return len(self.levels)

    @property
    def K(self) -> int:
        return math.prod(self.levels)


def fsq_squash(z):
    """Bounded odd map to (-1, 1) with unit slope at the origin."""
    return np.tanh(z)


def fsq_round(s, levels) -> tuple[np.ndarray, np.ndarray]:
    """Round squashed values to the nearest of L evenly spaced points in [-1, 1].

    Returns (bin indices, level values).
    """
    L = np.asarray(levels, dtype=np.float64)
    bins = np.rint((np.asarray(s) + 1.0) * 0.5 * (L - 1)).astype(np.int64)
    bins = np.clip(bins, 0, np.asarray(levels) - 1)
    return bins, -1.0 + 2.0 * bins / (L - 1)


def composite_index(bins, levels) -> np.ndarray:
    """Mixed-radix index with the first channel most significant."""
    bins = np.atleast_2d(np.asarray(bins, dtype=np.int64))
    idx = np.zeros(bins.shape[0], dtype=np.int64)
    for c, L in enumerate(levels):
        idx = idx * L + bins[:, c]
    return idx


def split_index(idx, levels) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64).copy()
    out = np.zeros((idx.size, len(levels)), dtype=np.int64)
    for c in range(len(levels) - 1, -1, -1):
        out[:, c] = idx % levels[c]
        idx //= levels[c]
    return out


def fsq_grid(spec: FsqSpec) -> np.ndarray:
    """K x d matrix of grid values, row i for composite index i."""
    bins = split_index(np.arange(spec.K), spec.levels)
    L = np.asarray(spec.levels, dtype=np.float64)
    return -1.0 + 2.0 * bins / (L - 1)


def fsq_quantize(z, spec: FsqSpec) -> QuantizeResult:
    z = as_matrix(z)
    if z.shape[1] != spec.channels:
        raise ValueError(f"token dimension {z.shape[1]} != FSQ channels {spec.channels}")
    s = fsq_squash(z)
    bins, values = fsq_round(s, spec.levels)
    return QuantizeResult(composite_index(bins, spec.levels), values, s)


@dataclass
class FSQGradients:
    z_e: np.ndarray
    decoder: np.ndarray | None
    loss: LossBreakdown
    result: QuantizeResult


def fsq_gradients(x, z_e, spec: FsqSpec, decoder=None) -> FSQGradients:
    """Reconstruction loss through FSQ; rounding is passed straight through."""
    z_e = as_matrix(z_e)
    x = as_matrix(x)
    q = fsq_quantize(z_e, spec)
    zq = q.hard_tokens
    x_hat = zq if decoder is None else zq @ decoder.T
    r = zq - z_e
    T = max(z_e.shape[0], 1)
    loss = LossBreakdown(recon=recon_l1(x, x_hat), latent_match=float((r * r).sum(axis=1).mean()),
                         lambda_peak=0.0, lambda_bins=0.0)
    onehot_marginal = np.bincount(q.indices, minlength=spec.K) / T
    loss.bins = float(onehot_marginal @ onehot_marginal)
    # reported for comparability; FSQ optimizes only the reconstruction term
    loss.recompute_total()
    g_xhat = np.sign(x_hat - x) / x.size
    g_zq = g_xhat if decoder is None else g_xhat @ decoder
    grad_z = g_zq * (1.0 - q.soft_average**2)
    g_dec = None if decoder is None else g_xhat.T @ zq
    return FSQGradients(grad_z, g_dec, loss, q)
