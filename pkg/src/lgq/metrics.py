"""Code usage statistics, distortion metrics and rate-distortion records."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .numerics import as_matrix

PSNR_CAP = 999.0


@dataclass
class UsageStats:
    counts: np.ndarray
    total: int
    active: int
    utilization: float
    k_eff: float
    entropy_bits: float


def usage_stats(indices, K: int) -> UsageStats:
    """Histogram statistics of hard code indices.

    Entropy is in bits over the empirical distribution (0 log 0 = 0); k_eff is
    its perplexity 2**entropy_bits.
    """
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= K):
        raise ValueError(f"code index out of range [0, {K})")
    counts = np.bincount(idx, minlength=K)
    total = int(idx.size)
    if total == 0:
        return UsageStats(counts, 0, 0, 0.0, 1.0, 0.0)
    q = counts[counts > 0] / total
    h = float(-(q * np.log2(q)).sum())
    h = max(h, 0.0)
    active = int((counts > 0).sum())
    return UsageStats(counts, total, active, active / K, float(2.0**h), h)


def psnr(x, x_hat, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE) in dB; +inf when the MSE is zero."""
    if not peak > 0:
        raise ValueError("peak must be positive")
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    mse = float(((x - x_hat) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


@dataclass
class MatchedCapacity:
    retained: np.ndarray    # code ids, most frequent first
    remapped: np.ndarray    # per-token index into the full codebook, restricted to retained ids
    mse: float | None       # distortion of the restricted reconstruction, if latents were given


def top_codes(indices, K: int, target: int) -> np.ndarray:
    counts = np.bincount(np.asarray(indices, dtype=np.int64), minlength=K)
    active = int((counts > 0).sum())
    if target > active:
        raise ValueError(f"target {target} exceeds the {active} active codes")
    if target < 1:
        raise ValueError("target must be >= 1")
    # stable sort on -count keeps lower indices first among equal counts
    order = np.argsort(-counts, kind="stable")
    return order[:target].astype(np.int64)


def matched_capacity_eval(indices, K: int, target: int, latents=None, centers=None) -> MatchedCapacity:
    """Restrict to the ``target`` most frequent codes and reassign tokens.

    With ``latents`` and ``centers`` every token is reassigned to its nearest
    retained center and the mean squared error is reported; otherwise tokens
    whose code was dropped keep no valid assignment (-1).
    """
    idx = np.asarray(indices, dtype=np.int64)
    keep = top_codes(idx, K, target)
    if latents is None or centers is None:
        remapped = np.where(np.isin(idx, keep), idx, -1)
        return MatchedCapacity(keep, remapped, None)
    z = as_matrix(latents)
    sub = as_matrix(centers)[keep]
    diff = z[:, None, :] - sub[None, :, :]
    d = np.einsum("tkc,tkc->tk", diff, diff)
    pick = np.argmin(d, axis=1)
    remapped = keep[pick]
    mse = float(d[np.arange(len(z)), pick].mean() / z.shape[1]) if len(z) else 0.0
    return MatchedCapacity(keep, remapped, mse)


@dataclass
class TrainRecord:
    epoch: int
    tau: float
    recon: float
    latent_match: float
    peak: float
    bins: float
    total: float
    mse: float
    psnr: float
    active: int
    utilization: float
    k_eff: float
    entropy_bits: float
    mean_center_step: float


RECORD_FIELDS = tuple(f.name for f in fields(TrainRecord))
_INT_FIELDS = {"epoch", "active"}


def _fmt(name: str, value) -> str:
    if name in _INT_FIELDS:
        return str(int(value))
    v = float(value)
    if name == "psnr" and not math.isfinite(v):
        v = PSNR_CAP
    return format(v, ".17g")


def write_records_csv(records, path) -> None:
    records = list(records)
    if not records:
        raise ValueError("no records to export")
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(RECORD_FIELDS) + "\n")
            for rec in records:
                fh.write(",".join(_fmt(n, getattr(rec, n)) for n in RECORD_FIELDS) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing records to {path}: {exc}") from exc


def read_records_csv(path) -> list[TrainRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [TrainRecord(**{n: (int(row[n]) if n in _INT_FIELDS else float(row[n])) for n in RECORD_FIELDS})
                for row in reader]


def record_dict(rec: TrainRecord) -> dict:
    d = asdict(rec)
    if not math.isfinite(d["psnr"]):
        d["psnr"] = PSNR_CAP
    return d


def write_records_json(records, path) -> None:
    records = list(records)
    if not records:
        raise ValueError("no records to export")
    try:
        Path(path).write_text(json.dumps([record_dict(r) for r in records], indent=1) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing records to {path}: {exc}") from exc


def write_latent_export(path, latents, indices, centers) -> int:
    """Write encoder outputs with their codes, then the active centers.

    Columns: kind, code, x0..x{C-1}. Returns the number of data rows.
    """
    centers = as_matrix(centers)
    C = centers.shape[1]
    latents = np.asarray(latents, dtype=np.float64).reshape(-1, C)
    indices = np.asarray(indices, dtype=np.int64).ravel()
    active = np.unique(indices)
    rows = 0
    with open(path, "w") as fh:
        fh.write(",".join(["kind", "code"] + [f"x{c}" for c in range(C)]) + "\n")
        for z, k in zip(latents, indices):
            fh.write(f"latent,{k}," + ",".join(format(v, ".17g") for v in z) + "\n")
            rows += 1
        for k in active:
            fh.write(f"center,{k}," + ",".join(format(v, ".17g") for v in centers[k]) + "\n")
            rows += 1
    return rows
