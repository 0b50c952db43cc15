"""Distance kernels, Gibbs soft assignment and the temperature schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import NonFiniteError, as_matrix, logsumexp

KERNELS = ("euclid", "squared")


class SingularityError(ValueError):
    """A token sits exactly on a center, where the euclid Jacobian is undefined."""


def check_kernel(kernel: str) -> str:
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    return kernel


def pairwise_energy(z, centers, kernel: str = "euclid") -> np.ndarray:
    """T x K energies between tokens ``z`` (T x C) and ``centers`` (K x C).

    ``euclid`` gives ||z - c||, ``squared`` gives ||z - c||^2.
    """
    check_kernel(kernel)
    z = as_matrix(z)
    centers = as_matrix(centers)
    if z.shape[1] != centers.shape[1]:
        raise ValueError(f"token dimension {z.shape[1]} != codebook dimension {centers.shape[1]}")
    # accumulate per coordinate so exact matches give exactly zero and no T x K x C tensor is built
    sq = np.zeros((z.shape[0], centers.shape[0]), dtype=np.float64)
    tmp = np.empty_like(sq)
    for c in range(z.shape[1]):
        np.subtract(z[:, c, None], centers[None, :, c], out=tmp)
        np.multiply(tmp, tmp, out=tmp)
        sq += tmp
    return np.sqrt(sq) if kernel == "euclid" else sq


@dataclass
class AssignmentMatrix:
    probs: np.ndarray      # T x K, rows on the simplex
    energies: np.ndarray   # T x K
    tau: float
    kernel: str = "euclid"

    @property
    def marginal(self) -> np.ndarray:
        return self.probs.mean(axis=0)


def soft_assign(energies, tau: float, kernel: str = "euclid") -> AssignmentMatrix:
    """Row-wise softmax of ``-energies / tau``."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    energies = np.asarray(energies, dtype=np.float64)
    if energies.ndim != 2:
        raise ValueError("energies must be a T x K matrix")
    if np.isnan(energies).any():
        idx = tuple(int(i) for i in np.argwhere(np.isnan(energies))[0])
        raise NonFiniteError(f"NaN energy at {idx}", index=idx)
    logits = -energies / tau
    log_p = logits - logsumexp(logits, axis=1)[:, None]
    return AssignmentMatrix(np.exp(log_p), energies, float(tau), kernel)


def assign(z, centers, tau: float, kernel: str = "euclid") -> AssignmentMatrix:
    return soft_assign(pairwise_energy(z, centers, kernel), tau, kernel)


@dataclass(frozen=True)
class AnnealSchedule:
    tau_start: float = 1.0
    tau_end: float = 0.1
    total_epochs: int = 1

    def __post_init__(self):
        if not (self.tau_start >= self.tau_end > 0):
            raise ValueError(f"need tau_start >= tau_end > 0, got {self.tau_start}, {self.tau_end}")
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be >= 1")


def tau_at_epoch(sched: AnnealSchedule, e: int) -> float:
    """Linear interpolation from tau_start (epoch 1) to tau_end (last epoch).

    Written as a convex combination so both endpoints come out bit-exact.
    """
    E = sched.total_epochs
    if not 1 <= e <= E:
        raise ValueError(f"epoch {e} outside [1, {E}]")
    if E == 1:
        return sched.tau_start
    w = (e - 1) / (E - 1)
    return (1.0 - w) * sched.tau_start + w * sched.tau_end


def energy_directions(z, centers, kernel: str = "euclid", energies=None) -> np.ndarray:
    """T x K x C gradients of each energy with respect to its token.

    euclid: (z - c_k) / d_k, squared: 2 (z - c_k).
    """
    z = as_matrix(z)
    centers = as_matrix(centers)
    diff = z[:, None, :] - centers[None, :, :]
    if kernel == "squared":
        return 2.0 * diff
    check_kernel(kernel)
    d = np.sqrt(np.einsum("tkc,tkc->tk", diff, diff)) if energies is None else energies
    if (d == 0).any():
        t, k = (int(i) for i in np.argwhere(d == 0)[0])
        raise SingularityError(f"token {t} lies exactly on center {k}; euclid Jacobian undefined")
    return diff / d[:, :, None]


def grad_probs_wrt_latent(z, centers, tau: float, kernel: str = "euclid") -> np.ndarray:
    """K x C matrix whose row k is the gradient of p_k with respect to the token z."""
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    a = assign(z, centers, tau, kernel)
    p = a.probs[0]
    u = energy_directions(z, centers, kernel, a.energies)[0]
    return (p[:, None] / tau) * (-u + p @ u)


def grad_probs_wrt_centers(z, centers, tau: float, kernel: str = "euclid") -> np.ndarray:
    """K x K x C array J with J[k, j] = gradient of p_k with respect to c_j."""
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    a = assign(z, centers, tau, kernel)
    p = a.probs[0]
    u = energy_directions(z, centers, kernel, a.energies)[0]
    K = p.size
    coef = (p[:, None] / tau) * (np.eye(K) - p[None, :])
    return coef[:, :, None] * u[None, :, :]


def backprop_probs(grad_probs, z, centers, assignment: AssignmentMatrix):
    """Pull a T x K gradient on the probabilities back to tokens and centers.

    Returns ``(grad_z, grad_centers)``. Avoids materializing T x K x C by
    expanding the energy directions into matrix products.
    """
    p = assignment.probs
    tau = assignment.tau
    G = np.asarray(grad_probs, dtype=np.float64)
    # dL/d energy_{t,k} = -(p_{t,k} / tau) (G_{t,k} - sum_j p_{t,j} G_{t,j})
    g_energy = -(p / tau) * (G - (p * G).sum(axis=1, keepdims=True))
    if assignment.kernel == "euclid":
        d = assignment.energies
        if (d == 0).any():
            t, k = (int(i) for i in np.argwhere(d == 0)[0])
            raise SingularityError(f"token {t} lies exactly on center {k}; euclid Jacobian undefined")
        w = g_energy / d
    else:
        w = 2.0 * g_energy
    # grad wrt token t: sum_k w_tk (z_t - c_k); wrt center k: -sum_t w_tk (z_t - c_k)
    grad_z = z * w.sum(axis=1, keepdims=True) - w @ centers
    grad_c = -(w.T @ z) + centers * w.sum(axis=0)[:, None]
    return grad_z, grad_c
