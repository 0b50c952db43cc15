"""Learnable codebook: initialization, optimizer updates, drift, checkpoints."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import NonFiniteError, as_matrix

CHECKPOINT_MAGIC = b"LGQCODE\x00"
CHECKPOINT_VERSION = 1
# magic, version, K, C, number of epoch snapshots, payload length in f64 values
_HEADER = struct.Struct("<8sIIIIQ")


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


@dataclass
class Codebook:
    centers: np.ndarray
    init_snapshot: np.ndarray = None
    epoch_snapshots: list[np.ndarray] = field(default_factory=list)
    init_scheme: str = "given"

    def __post_init__(self):
        self.centers = as_matrix(self.centers).copy()
        if self.init_snapshot is None:
            self.init_snapshot = self.centers.copy()
        self.init_snapshot = as_matrix(self.init_snapshot, *self.centers.shape).copy()
        self.init_snapshot.flags.writeable = False

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def C(self) -> int:
        return self.centers.shape[1]

    def snapshot(self) -> None:
        """Append a copy of the current centers to the epoch snapshot list."""
        self.epoch_snapshots.append(self.centers.copy())


def init_codebook(K: int, C: int, rng: np.random.Generator, scheme: str = "uniform_box",
                  lo: float = -1.0, hi: float = 1.0, sigma: float = 1.0, batch=None) -> Codebook:
    """Draw K centers in R^C.

    Schemes: ``uniform_box`` (each coordinate in [lo, hi]), ``gaussian`` (isotropic,
    std ``sigma``) and ``data_sample`` (K distinct rows of ``batch``).
    """
    if K < 1 or C < 1:
        raise ValueError(f"K and C must be positive, got K={K}, C={C}")
    if scheme == "uniform_box":
        if not lo <= hi:
            raise ValueError("uniform_box needs lo <= hi")
        centers = rng.uniform(lo, hi, size=(K, C))
    elif scheme == "gaussian":
        if sigma < 0:
            raise ValueError("gaussian init needs sigma >= 0")
        centers = sigma * rng.standard_normal((K, C))
    elif scheme == "data_sample":
        if batch is None:
            raise ValueError("data_sample init needs a batch")
        batch = as_matrix(batch, cols=C)
        if batch.shape[0] < K:
            raise ValueError(f"data_sample needs at least K={K} tokens, batch has {batch.shape[0]}")
        centers = batch[rng.choice(batch.shape[0], size=K, replace=False)]
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return Codebook(centers, init_scheme=scheme)


class SGD:
    def __init__(self, lr: float):
        if lr < 0:
            raise ValueError("learning rate must be >= 0")
        self.lr = lr

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        params -= self.lr * grad


class Adam:
    """Adam with bias correction; one instance per parameter array."""

    def __init__(self, lr: float = 1e-2, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0:
            raise ValueError("learning rate must be >= 0")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1) or eps <= 0:
            raise ValueError("invalid Adam hyperparameters")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(name: str, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr, beta1, beta2, eps)
    raise ValueError(f"unknown optimizer {name!r}")


def apply_update(cb: Codebook, grad, optimizer) -> Codebook:
    """Apply one optimizer step to the centers in place and return ``cb``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != cb.centers.shape:
        raise ValueError(f"gradient shape {grad.shape} != codebook shape {cb.centers.shape}")
    bad = ~np.isfinite(grad)
    if bad.any():
        k, c = (int(i) for i in np.argwhere(bad)[0])
        raise NonFiniteError(f"non-finite codebook gradient at (k={k}, c={c})", index=(k, c))
    optimizer.step(cb.centers, grad)
    return cb


@dataclass
class DriftReport:
    per_code_drift: np.ndarray
    per_epoch_mean_step: np.ndarray


def mean_center_step(prev: np.ndarray, cur: np.ndarray) -> float:
    """Mean over codes of the mean absolute coordinate change."""
    return float(np.abs(cur - prev).mean())


def drift_report(cb: Codebook) -> DriftReport:
    drift = np.linalg.norm(cb.centers - cb.init_snapshot, axis=1)
    snaps = cb.epoch_snapshots
    steps = np.array([mean_center_step(a, b) for a, b in zip(snaps[:-1], snaps[1:])], dtype=np.float64)
    return DriftReport(per_code_drift=drift, per_epoch_mean_step=steps)


def write_drift_csv(report: DriftReport, code_path, epoch_path) -> None:
    with open(code_path, "w") as fh:
        fh.write("code_index,drift\n")
        for k, d in enumerate(report.per_code_drift):
            fh.write(f"{k},{d:.17g}\n")
    with open(epoch_path, "w") as fh:
        fh.write("epoch,mean_step\n")
        for e, s in enumerate(report.per_epoch_mean_step, start=1):
            fh.write(f"{e},{s:.17g}\n")


def save_checkpoint(cb: Codebook, path) -> None:
    arrays = [cb.centers, cb.init_snapshot, *cb.epoch_snapshots]
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, cb.K, cb.C,
                          len(cb.epoch_snapshots), len(payload) // 8)
    Path(path).write_bytes(header + payload)


def load_checkpoint(path) -> Codebook:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointTruncatedError(f"{path}: file shorter than the header")
    magic, version, K, C, n_snap, n_values = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a codebook checkpoint")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: unsupported checkpoint version {version}")
    if n_values != (2 + n_snap) * K * C:
        raise CheckpointShapeError(
            f"{path}: header K={K}, C={C}, snapshots={n_snap} implies {(2 + n_snap) * K * C} values, "
            f"payload declares {n_values}")
    body = raw[_HEADER.size:]
    if len(body) < 8 * n_values:
        raise CheckpointTruncatedError(f"{path}: payload has {len(body)} bytes, expected {8 * n_values}")
    if len(body) > 8 * n_values:
        raise CheckpointShapeError(f"{path}: {len(body) - 8 * n_values} trailing bytes after payload")
    data = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(2 + n_snap, K, C)
    return Codebook(data[0].copy(), init_snapshot=data[1].copy(),
                    epoch_snapshots=[d.copy() for d in data[2:]])
