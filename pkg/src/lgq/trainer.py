"""Desk-scale training on synthetic latents, plus ablation sweeps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .assignment import AnnealSchedule, assign, tau_at_epoch
from .baselines import FsqSpec, fsq_gradients, fsq_quantize, vq_gradients, vq_quantize
from .codebook import Codebook, apply_update, init_codebook, make_optimizer, mean_center_step
from .losses import Instance, LossBreakdown, loss_gradients, objective, recon_l1
from .metrics import TrainRecord, UsageStats, psnr, usage_stats
from .numerics import NonFiniteError, finite_diff_grad, make_rng, relative_error
from .quantizer import quantize

log = logging.getLogger(__name__)

QUANTIZERS = ("lgq", "vq", "fsq")
DATA_MODES = ("latent_mixture", "linear_autoencoder")


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, batch: int, what: str = "loss"):
        super().__init__(f"non-finite {what} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class GradientCheckError(AssertionError):
    pass


# ---------------------------------------------------------------- synthetic data

@dataclass
class SyntheticSpec:
    means: np.ndarray                 # M x C mixture means
    sigma: float = 0.05
    weights: np.ndarray | None = None  # defaults to uniform
    n_samples: int = 8192
    mode: str = "latent_mixture"
    generator: np.ndarray | None = None  # D x C, linear_autoencoder only
    noise: float = 0.0

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        M = self.means.shape[0]
        w = np.full(M, 1.0 / M) if self.weights is None else np.asarray(self.weights, dtype=np.float64)
        if w.shape != (M,) or (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixture weights must be a length-{M} probability vector")
        self.weights = w
        if self.sigma < 0 or self.noise < 0:
            raise ValueError("sigma and noise must be >= 0")
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        if self.mode not in DATA_MODES:
            raise ValueError(f"unknown data mode {self.mode!r}")
        if self.mode == "linear_autoencoder":
            if self.generator is None:
                raise ValueError("linear_autoencoder mode needs a generator matrix")
            self.generator = np.asarray(self.generator, dtype=np.float64)
            if self.generator.shape[1] != self.means.shape[1]:
                raise ValueError("generator columns must match the latent dimension")


@dataclass
class Dataset:
    x: np.ndarray        # N x D observations (D = C in latent_mixture mode)
    latents: np.ndarray  # N x C ground-truth mixture samples
    labels: np.ndarray   # N component ids
    mode: str = "latent_mixture"


def corner_means(M: int, C: int, rng: np.random.Generator) -> np.ndarray:
    """M distinct random corners of the cube [-1, 1]^C."""
    if M > 2**C:
        raise ValueError(f"only {2**C} corners exist in dimension {C}")
    chosen: list[tuple] = []
    seen = set()
    while len(chosen) < M:
        v = tuple(rng.choice((-1.0, 1.0), size=C))
        if v not in seen:
            seen.add(v)
            chosen.append(v)
    return np.array(chosen, dtype=np.float64).reshape(M, C)


def gen_synthetic(spec: SyntheticSpec, rng: np.random.Generator) -> Dataset:
    N, C = spec.n_samples, spec.means.shape[1]
    labels = rng.choice(len(spec.weights), size=N, p=spec.weights)
    z = spec.means[labels] + spec.sigma * rng.standard_normal((N, C))
    if spec.mode == "latent_mixture":
        return Dataset(z.copy(), z, labels)
    x = z @ spec.generator.T + spec.noise * rng.standard_normal((N, spec.generator.shape[0]))
    return Dataset(x, z, labels, spec.mode)


@dataclass
class DataConfig:
    mode: str = "latent_mixture"
    n_modes: int = 16
    sigma: float = 0.05
    n_samples: int = 8192
    data_dim: int = 16
    noise: float = 0.0


def make_dataset(cfg: DataConfig, C: int, seed: int) -> tuple[SyntheticSpec, Dataset]:
    rng = make_rng(seed, "data")
    means = corner_means(cfg.n_modes, C, rng)
    gen = None
    if cfg.mode == "linear_autoencoder":
        gen = rng.standard_normal((cfg.data_dim, C)) / np.sqrt(C)
    spec = SyntheticSpec(means, cfg.sigma, None, cfg.n_samples, cfg.mode, gen, cfg.noise)
    return spec, gen_synthetic(spec, rng)


# ---------------------------------------------------------------- training

@dataclass
class TrainConfig:
    quantizer: str = "lgq"
    K: int = 64
    C: int = 8
    kernel: str = "euclid"
    tau_start: float = 1.0
    tau_end: float = 0.1
    lambda_peak: float = 0.005
    lambda_bins: float = 0.005
    optimizer: str = "adam"
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    batch_size: int = 256
    seed: int = 42
    init: str = "uniform_box"
    init_lo: float = -1.0
    init_hi: float = 1.0
    init_sigma: float = 1.0
    beta_commit: float = 0.25
    fsq_levels: tuple[int, ...] = ()
    psnr_peak: float = 2.0
    snapshots: bool = False
    debug_gradcheck: bool = False

    def __post_init__(self):
        if self.quantizer not in QUANTIZERS:
            raise ValueError(f"unknown quantizer {self.quantizer!r}")
        if self.K < 1 or self.C < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("K, C, batch_size must be >= 1 and epochs >= 0")
        if self.lambda_peak < 0 or self.lambda_bins < 0:
            raise ValueError("regularizer weights must be non-negative")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.fsq_levels = tuple(int(v) for v in self.fsq_levels)

    @property
    def schedule(self) -> AnnealSchedule:
        return AnnealSchedule(self.tau_start, self.tau_end, max(self.epochs, 1))

    def fsq_spec(self) -> FsqSpec:
        return FsqSpec(self.fsq_levels or (2,) * self.C)


@dataclass
class ModelState:
    codebook: Codebook | None
    encoder: np.ndarray | None = None  # C x D
    decoder: np.ndarray | None = None  # D x C

    def encode(self, x: np.ndarray) -> np.ndarray:
        return x if self.encoder is None else x @ self.encoder.T


@dataclass
class TrainResult:
    state: ModelState
    records: list[TrainRecord] = field(default_factory=list)

    @property
    def codebook(self) -> Codebook | None:
        return self.state.codebook


@dataclass
class Evaluation:
    loss: LossBreakdown
    mse: float
    psnr: float
    usage: UsageStats
    indices: np.ndarray


def init_state(config: TrainConfig, dataset: Dataset) -> ModelState:
    D = dataset.x.shape[1]
    cb = None
    if config.quantizer != "fsq":
        batch = None
        if config.init == "data_sample":
            batch = dataset.x if D == config.C else None
            if batch is None:
                raise ValueError("data_sample init is only available in latent_mixture mode")
        cb = init_codebook(config.K, config.C, make_rng(config.seed, "init"), config.init,
                           config.init_lo, config.init_hi, config.init_sigma, batch)
    if dataset.mode == "latent_mixture":
        if D != config.C:
            raise ValueError(f"data dimension {D} != latent dimension C={config.C}")
        return ModelState(cb)
    rng = make_rng(config.seed, "linear_maps")
    enc = rng.standard_normal((config.C, D)) / np.sqrt(D)
    dec = rng.standard_normal((D, config.C)) / np.sqrt(config.C)
    return ModelState(cb, enc, dec)


def _step_grads(config: TrainConfig, state: ModelState, xb: np.ndarray, tau: float):
    z_e = state.encode(xb)
    if config.quantizer == "lgq":
        inst = Instance(xb, z_e, state.codebook.centers, tau, config.kernel,
                        config.lambda_peak, config.lambda_bins, state.decoder)
        g = loss_gradients(inst, "hard")
        return g.loss, g.z_e, g.centers, g.decoder
    if config.quantizer == "vq":
        g = vq_gradients(xb, z_e, state.codebook.centers, config.beta_commit, state.decoder)
        return g.loss, g.z_e, g.centers, g.decoder
    g = fsq_gradients(xb, z_e, config.fsq_spec(), state.decoder)
    return g.loss, g.z_e, None, g.decoder


def evaluate(config: TrainConfig, state: ModelState, x: np.ndarray, tau: float) -> Evaluation:
    """Forward pass over a whole dataset with hard quantization."""
    z_e = state.encode(x)
    if config.quantizer == "lgq":
        centers = state.codebook.centers
        a = assign(z_e, centers, tau, config.kernel)
        q = quantize(z_e, centers, a)
        r = q.hard_tokens - z_e
        pbar = a.marginal
        loss = LossBreakdown(latent_match=float((r * r).sum(axis=1).mean()),
                             peak=float(np.maximum(0.0, 1.0 - (a.probs**2).sum(axis=1)).mean()),
                             bins=float(pbar @ pbar),
                             lambda_peak=config.lambda_peak, lambda_bins=config.lambda_bins)
        K = config.K
    elif config.quantizer == "vq":
        q = vq_quantize(z_e, state.codebook.centers)
        r = q.hard_tokens - z_e
        lm = float((r * r).sum(axis=1).mean())
        marg = np.bincount(q.indices, minlength=config.K) / len(x)
        loss = LossBreakdown(latent_match=lm, commit=config.beta_commit * lm, bins=float(marg @ marg),
                             lambda_peak=0.0, lambda_bins=0.0)
        K = config.K
    else:
        spec = config.fsq_spec()
        q = fsq_quantize(z_e, spec)
        r = q.hard_tokens - z_e
        marg = np.bincount(q.indices, minlength=spec.K) / len(x)
        loss = LossBreakdown(latent_match=float((r * r).sum(axis=1).mean()), bins=float(marg @ marg),
                             lambda_peak=0.0, lambda_bins=0.0)
        K = spec.K
    x_hat = q.hard_tokens if state.decoder is None else q.hard_tokens @ state.decoder.T
    loss.recon = recon_l1(x, x_hat)
    loss.recompute_total()
    mse = float(((x - x_hat) ** 2).mean())
    return Evaluation(loss, mse, psnr(x, x_hat, config.psnr_peak), usage_stats(q.indices, K), q.indices)


def gradient_check(config: TrainConfig, state: ModelState, xb: np.ndarray, tau: float,
                   tokens: int = 4, h: float = 1e-5, tol: float = 1e-5) -> float:
    """Soft-path analytic gradient vs central differences on a few tokens."""
    xb = xb[:tokens]
    z_e = state.encode(xb)
    centers = state.codebook.centers
    inst = Instance(xb, z_e, centers, tau, config.kernel, config.lambda_peak, config.lambda_bins, state.decoder)
    g = loss_gradients(inst, "soft")

    def f(v):
        return objective(replace(inst, centers=v.reshape(centers.shape)), "soft")

    err = relative_error(g.centers, finite_diff_grad(f, centers, h))
    if err > tol:
        raise GradientCheckError(f"codebook gradient relative error {err:.3g} > {tol}")
    return err


def train(config: TrainConfig, dataset: Dataset) -> TrainResult:
    """Run ``config.epochs`` epochs and return the final state and per-epoch records."""
    state = init_state(config, dataset)
    result = TrainResult(state)
    if config.epochs == 0:
        return result
    x = dataset.x
    N = x.shape[0]
    shuffle_rng = make_rng(config.seed, "shuffle")
    opt = lambda: make_optimizer(config.optimizer, config.lr, config.beta1, config.beta2, config.eps)  # noqa: E731
    opt_cb, opt_enc, opt_dec = opt(), opt(), opt()
    cb = state.codebook
    if cb is not None and config.snapshots:
        cb.snapshot()
    prev = None if cb is None else cb.centers.copy()
    sched = config.schedule
    for epoch in range(1, config.epochs + 1):
        tau = tau_at_epoch(sched, epoch)
        perm = shuffle_rng.permutation(N)
        for b, lo in enumerate(range(0, N, config.batch_size)):
            xb = x[perm[lo:lo + config.batch_size]]
            try:
                loss, g_z, g_c, g_dec = _step_grads(config, state, xb, tau)
            except NonFiniteError as exc:
                raise DivergenceError(epoch, b, "input") from exc
            if not np.isfinite(loss.total):
                raise DivergenceError(epoch, b)
            if config.debug_gradcheck and config.quantizer == "lgq" and b % 10 == 0:
                gradient_check(config, state, xb, tau)
            try:
                if g_c is not None:
                    apply_update(cb, g_c, opt_cb)
                if state.encoder is not None:
                    g_enc = g_z.T @ xb
                    if not (np.isfinite(g_enc).all() and np.isfinite(g_dec).all()):
                        raise NonFiniteError("non-finite linear map gradient")
                    opt_enc.step(state.encoder, g_enc)
                    opt_dec.step(state.decoder, g_dec)
            except NonFiniteError as exc:
                raise DivergenceError(epoch, b, "gradient") from exc
        ev = evaluate(config, state, x, tau)
        if not np.isfinite(ev.loss.total):
            raise DivergenceError(epoch, -1)
        step = 0.0
        if cb is not None:
            step = mean_center_step(prev, cb.centers)
            prev = cb.centers.copy()
            if config.snapshots:
                cb.snapshot()
        u = ev.usage
        result.records.append(TrainRecord(
            epoch=epoch, tau=tau, recon=ev.loss.recon, latent_match=ev.loss.latent_match,
            peak=ev.loss.peak, bins=ev.loss.bins, total=ev.loss.total, mse=ev.mse, psnr=ev.psnr,
            active=u.active, utilization=u.utilization, k_eff=u.k_eff, entropy_bits=u.entropy_bits,
            mean_center_step=step))
        log.debug("epoch %d tau=%.4f total=%.6f active=%d", epoch, tau, ev.loss.total, u.active)
    return result


# ---------------------------------------------------------------- sweeps

SWEEP_AXES = ("schedule", "lambdas", "K")
NAMED_SCHEDULES = {
    "fast": (1.0, 0.05),
    "default": (1.0, 0.1),
    "slow": (1.0, 0.2),
    "constant": (1.0, 1.0),
}


def sweep_override(axis: str, value: str) -> dict:
    """Translate one sweep value into TrainConfig field overrides."""
    value = str(value).strip()
    if axis == "schedule":
        if value in NAMED_SCHEDULES:
            a, b = NAMED_SCHEDULES[value]
        else:
            a, b = (float(v) for v in value.split(":"))
        return {"tau_start": a, "tau_end": b}
    if axis == "lambdas":
        a, b = (float(v) for v in value.split(":"))
        return {"lambda_peak": a, "lambda_bins": b}
    if axis == "K":
        return {"K": int(value)}
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


@dataclass
class SweepRow:
    label: str
    config: TrainConfig | None
    result: TrainResult | None
    error: str | None = None

    @property
    def final(self) -> TrainRecord | None:
        if self.result is None or not self.result.records:
            return None
        return self.result.records[-1]


def ablation_sweep(base: TrainConfig, axis: str, values, dataset: Dataset) -> list[SweepRow]:
    """One training run per value with a shared seed; failures are recorded, not raised."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    rows = []
    for v in values:
        label = str(v)
        try:
            cfg = replace(base, **sweep_override(axis, v))
            rows.append(SweepRow(label, cfg, train(cfg, dataset)))
        except (ValueError, DivergenceError, GradientCheckError) as exc:
            log.warning("sweep value %s failed: %s", label, exc)
            rows.append(SweepRow(label, None, None, str(exc)))
    return rows
