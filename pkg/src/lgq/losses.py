"""Scalar objectives and their analytic gradients.

Normalization: reconstruction is the mean absolute error over all elements,
the latent match term is the mean over tokens of the squared L2 distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import AssignmentMatrix, assign, backprop_probs, check_kernel, pairwise_energy
from .numerics import as_matrix
from .quantizer import QuantizeResult, quantize

DEFAULT_LAMBDA = 0.005
SIMPLEX_TOL = 1e-9


@dataclass
class LossBreakdown:
    recon: float = 0.0
    latent_match: float = 0.0
    peak: float = 0.0
    bins: float = 0.0
    total: float = 0.0
    lambda_peak: float = DEFAULT_LAMBDA
    lambda_bins: float = DEFAULT_LAMBDA
    commit: float = 0.0  # weighted commitment term, nonzero only for the VQ baseline

    def recompute_total(self) -> "LossBreakdown":
        self.total = (self.recon + self.latent_match + self.commit
                      + self.lambda_peak * self.peak + self.lambda_bins * self.bins)
        return self


def recon_l1(x, x_hat) -> float:
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    if x.size == 0:
        return 0.0
    return float(np.abs(x - x_hat).mean())


def peak_loss(assignment: AssignmentMatrix) -> float:
    """Mean over tokens of max(0, 1 - sum_k p_k^2)."""
    p = assignment.probs
    return float(np.maximum(0.0, 1.0 - (p * p).sum(axis=1)).mean())


def bins_loss(assignment: AssignmentMatrix) -> float:
    """Squared L2 norm of the marginal code usage."""
    pbar = assignment.marginal
    return float(pbar @ pbar)


def disc_loss(z_e, result: QuantizeResult, assignment: AssignmentMatrix,
              lambda_peak: float = DEFAULT_LAMBDA, lambda_bins: float = DEFAULT_LAMBDA) -> LossBreakdown:
    if lambda_peak < 0 or lambda_bins < 0:
        raise ValueError("regularizer weights must be non-negative")
    z_e = as_matrix(z_e)
    if result.hard_tokens.shape != z_e.shape:
        raise ValueError(f"shape mismatch {result.hard_tokens.shape} vs {z_e.shape}")
    r = result.hard_tokens - z_e
    lm = float((r * r).sum(axis=1).mean()) if len(z_e) else 0.0
    out = LossBreakdown(latent_match=lm, peak=peak_loss(assignment), bins=bins_loss(assignment),
                        lambda_peak=lambda_peak, lambda_bins=lambda_bins)
    return out.recompute_total()


def _xlogx(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out


def free_energy(p, z, centers, tau: float, kernel: str = "euclid") -> float:
    """Expected energy under p plus tau times sum p log p (0 log 0 = 0)."""
    p = np.asarray(p, dtype=np.float64).ravel()
    if not tau > 0:
        raise ValueError("temperature must be positive")
    if (p < -SIMPLEX_TOL).any() or abs(p.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError("p is not on the probability simplex")
    p = np.clip(p, 0.0, None)
    e = pairwise_energy(np.asarray(z, dtype=np.float64).reshape(1, -1), centers, kernel)[0]
    return float(p @ e + tau * _xlogx(p).sum())


def theory_regularizers(assignment: AssignmentMatrix) -> tuple[float, float]:
    """Return (mean token entropy, KL of the marginal from uniform), in nats."""
    p = assignment.probs
    r_ent = float(-_xlogx(p).sum(axis=1).mean())
    pbar = assignment.marginal
    K = pbar.size
    r_usage = float(_xlogx(pbar).sum() + pbar.sum() * np.log(K))
    return r_ent, r_usage


@dataclass
class Instance:
    """One forward/backward problem: targets, encoder outputs and parameters.

    ``decoder`` is a D x C matrix mapping quantized tokens to reconstructions;
    None means the identity (reconstruction is the quantized token itself).
    """
    x: np.ndarray
    z_e: np.ndarray
    centers: np.ndarray
    tau: float
    kernel: str = "euclid"
    lambda_peak: float = DEFAULT_LAMBDA
    lambda_bins: float = DEFAULT_LAMBDA
    decoder: np.ndarray | None = None


@dataclass
class Gradients:
    z_e: np.ndarray
    centers: np.ndarray
    decoder: np.ndarray | None
    loss: LossBreakdown
    result: QuantizeResult
    assignment: AssignmentMatrix


def loss_gradients(inst: Instance, forward: str = "hard") -> Gradients:
    """Total objective and its gradients for one instance.

    ``forward="hard"`` is training semantics: z_q takes the codebook row as its
    value and the soft average as its gradient path. ``forward="soft"`` uses the
    soft average as the value too, which makes the returned gradient the exact
    derivative of the returned loss (used for finite-difference checks).
    """
    if forward not in ("hard", "soft"):
        raise ValueError(f"forward must be 'hard' or 'soft', got {forward!r}")
    check_kernel(inst.kernel)
    if inst.lambda_peak < 0 or inst.lambda_bins < 0:
        raise ValueError("regularizer weights must be non-negative")
    z_e = as_matrix(inst.z_e)
    centers = as_matrix(inst.centers)
    x = as_matrix(inst.x)
    T = z_e.shape[0]

    a = assign(z_e, centers, inst.tau, inst.kernel)
    q = quantize(z_e, centers, a)
    zq = q.hard_tokens if forward == "hard" else q.soft_average
    x_hat = zq if inst.decoder is None else zq @ inst.decoder.T
    if x_hat.shape != x.shape:
        raise ValueError(f"reconstruction shape {x_hat.shape} != target shape {x.shape}")

    r = zq - z_e
    p = a.probs
    sq = (p * p).sum(axis=1)
    pbar = a.marginal
    loss = LossBreakdown(
        recon=recon_l1(x, x_hat),
        latent_match=float((r * r).sum(axis=1).mean()),
        peak=float(np.maximum(0.0, 1.0 - sq).mean()),
        bins=float(pbar @ pbar),
        lambda_peak=inst.lambda_peak,
        lambda_bins=inst.lambda_bins,
    ).recompute_total()

    g_xhat = np.sign(x_hat - x) / x.size
    g_zq = 2.0 * r / T + (g_xhat if inst.decoder is None else g_xhat @ inst.decoder)
    g_dec = None if inst.decoder is None else g_xhat.T @ zq

    # the hinge is active wherever 1 - sum p^2 > 0; its subgradient at 0 is taken as 0
    active = (1.0 - sq > 0.0).astype(np.float64)
    grad_probs = (g_zq @ centers.T
                  + inst.lambda_peak * (-2.0 / T) * p * active[:, None]
                  + inst.lambda_bins * (2.0 / T) * pbar[None, :])
    grad_z, grad_c = backprop_probs(grad_probs, z_e, centers, a)
    grad_c += p.T @ g_zq
    grad_z -= 2.0 * r / T
    return Gradients(grad_z, grad_c, g_dec, loss, q, a)


def objective(inst: Instance, forward: str = "soft") -> float:
    """Scalar total loss, without gradients."""
    z_e = as_matrix(inst.z_e)
    a = assign(z_e, inst.centers, inst.tau, inst.kernel)
    q = quantize(z_e, inst.centers, a)
    zq = q.hard_tokens if forward == "hard" else q.soft_average
    x_hat = zq if inst.decoder is None else zq @ np.asarray(inst.decoder).T
    r = zq - z_e
    loss = LossBreakdown(recon=recon_l1(inst.x, x_hat), latent_match=float((r * r).sum(axis=1).mean()),
                         peak=peak_loss(a), bins=bins_loss(a),
                         lambda_peak=inst.lambda_peak, lambda_bins=inst.lambda_bins)
    return loss.recompute_total().total
