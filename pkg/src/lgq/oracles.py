"""Brute-force checks of the soft assignment's theoretical properties.

Each probe computes its reference quantity with its own arithmetic (grid
search, closed-form bounds, scipy KL, central differences) and calls the code
under test only to obtain the value being checked.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, stats

from . import assignment as _assignment
from . import losses as _losses
from .numerics import finite_diff_grad, make_rng, relative_error

SELECTORS = ("free_energy", "hard_limit", "lipschitz", "regularizers", "gradients")

FREE_ENERGY_TOL = 1e-4
GRADIENT_TOL = 1e-5
KL_TOL = 1e-12


@dataclass
class OracleReport:
    name: str
    instances: int
    max_violation: float
    tolerance: float
    passed: bool = field(init=False)
    details: dict = field(default_factory=dict)
    skipped: int = 0

    def __post_init__(self):
        self.passed = bool(self.max_violation <= self.tolerance)

    def to_json(self) -> str:
        return json.dumps(asdict(self), default=float)


# ---------------------------------------------------------------- free energy

def _energies(z, centers, kernel):
    out = []
    for c in np.asarray(centers, dtype=np.float64):
        s = 0.0
        for a, b in zip(np.asarray(z, dtype=np.float64).ravel(), c):
            s += (a - b) * (a - b)
        out.append(np.sqrt(s) if kernel == "euclid" else s)
    return np.array(out)


def _free_energy(p, e, tau):
    p = np.asarray(p, dtype=np.float64)
    ent = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return p @ e + tau * ent.sum(axis=-1) if p.ndim == 1 else p @ e + tau * ent.sum(axis=-1)


def simplex_grid(K: int, resolution: float) -> np.ndarray:
    """All barycentric points with coordinates on multiples of ``resolution``."""
    n = int(round(1.0 / resolution))
    axes = np.indices((n + 1,) * (K - 1)).reshape(K - 1, -1).T
    axes = axes[axes.sum(axis=1) <= n]
    last = n - axes.sum(axis=1, keepdims=True)
    return np.hstack([axes, last]) / n


def simplex_minimize_free_energy(z, centers, tau: float, kernel: str = "euclid",
                                 resolution: float = 1e-2, mode: str = "grid"):
    """Minimize the free energy over the simplex without using the Gibbs formula.

    ``grid``: exhaustive barycentric grid then a Nelder-Mead polish (K <= 4).
    ``descent``: L-BFGS over unconstrained logits from the uniform point (K <= 64).
    Returns ``(p_star, F_star)``.
    """
    e = _energies(z, centers, kernel)
    K = e.size
    if mode == "grid":
        if K > 4:
            raise ValueError(f"grid mode supports K <= 4 (got K={K}); use mode='descent'")
        if resolution > 1e-2:
            raise ValueError("grid resolution must be <= 1e-2")
        if K == 1:
            return np.ones(1), float(e[0])
        grid = simplex_grid(K, resolution)
        vals = _free_energy(grid, e, tau)
        best = grid[np.argmin(vals)]

        def f(free):
            p = np.append(free, 1.0 - free.sum())
            if (p < 0).any():
                return np.inf
            return float(_free_energy(p, e, tau))

        res = optimize.minimize(f, best[:-1], method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000,
                                         "initial_simplex": _initial_simplex(best[:-1], resolution)})
        p = np.append(res.x, 1.0 - res.x.sum())
        F = f(res.x)
        if not F <= vals.min():
            p, F = best, float(vals.min())
        return p, float(F)
    if mode == "descent":
        if K > 64:
            raise ValueError("descent mode supports K <= 64")

        # unconstrained quasi-Newton over logits; the simplex is only a parameterization here
        def f(theta):
            w = np.exp(theta - theta.max())
            p = w / w.sum()
            g = e + tau * (1.0 + np.log(np.maximum(p, 1e-300)))
            return float(_free_energy(p, e, tau)), p * (g - p @ g)

        res = optimize.minimize(f, np.zeros(K), jac=True, method="L-BFGS-B",
                                options={"gtol": 1e-13, "ftol": 1e-16, "maxiter": 10_000})
        w = np.exp(res.x - res.x.max())
        p = w / w.sum()
        return p, float(_free_energy(p, e, tau))
    raise ValueError(f"unknown mode {mode!r}")


def _initial_simplex(x0, size):
    n = x0.size
    pts = [x0]
    for i in range(n):
        step = np.zeros(n)
        step[i] = size if x0.sum() + size <= 1 else -size
        pts.append(x0 + step)
    return np.array(pts)


def free_energy_probe(instances: int = 100, K: int = 3, kernels=("euclid", "squared"),
                      tau_range=(0.1, 2.0), rng=None, tol: float = FREE_ENERGY_TOL) -> OracleReport:
    rng = make_rng(0, "free_energy") if rng is None else rng
    worst, worst_case, n = -np.inf, None, 0
    for kernel in kernels:
        for _ in range(instances):
            C = 2
            centers = rng.uniform(-1, 1, size=(K, C))
            z = rng.uniform(-1, 1, size=C)
            tau = rng.uniform(*tau_range)
            p = _assignment.soft_assign(_assignment.pairwise_energy(z[None], centers, kernel), tau).probs[0]
            F_soft = float(_free_energy(p, _energies(z, centers, kernel), tau))
            _, F_star = simplex_minimize_free_energy(z, centers, tau, kernel)
            v = F_soft - F_star
            n += 1
            if v > worst:
                worst, worst_case = v, {"kernel": kernel, "tau": tau, "F_soft": F_soft, "F_oracle": F_star}
    return OracleReport("free_energy", n, float(worst), tol, {"worst": worst_case})


# ---------------------------------------------------------------- hard limit

@dataclass
class HardLimitOutcome:
    skipped: bool
    monotone: bool = True
    final_p: float = float("nan")
    bound: float = float("nan")
    margin: float = float("nan")
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.skipped or (self.monotone and self.final_p >= 1.0 - self.bound)


def hard_limit_probe(z, centers, taus, kernel: str = "euclid") -> HardLimitOutcome:
    """Check p at the nearest center is nondecreasing along decreasing taus and
    within K exp(-margin / tau_final) of one at the end."""
    e = _energies(z, centers, kernel)
    order = np.argsort(e, kind="stable")
    if e.size > 1 and e[order[0]] == e[order[1]]:
        return HardLimitOutcome(True, note="nearest centers tied; uniqueness required")
    kstar = order[0]
    margin = float(e[order[1]] - e[order[0]]) if e.size > 1 else np.inf
    ps = []
    for tau in taus:
        a = _assignment.soft_assign(_assignment.pairwise_energy(np.atleast_2d(z), centers, kernel), tau)
        ps.append(float(a.probs[0, kstar]))
    monotone = all(b >= a for a, b in zip(ps[:-1], ps[1:]))
    bound = float(e.size * np.exp(-margin / taus[-1])) if e.size > 1 else 0.0
    return HardLimitOutcome(False, monotone, ps[-1], bound, margin)


HARD_LIMIT_TAUS = (1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001)


def hard_limit_suite(instances: int = 100, K: int = 8, C: int = 4, min_margin: float = 0.1,
                     taus=HARD_LIMIT_TAUS, rng=None, target: float = 1e-6) -> OracleReport:
    """Random instances with a best/second-best distance gap of at least ``min_margin``."""
    rng = make_rng(0, "hard_limit") if rng is None else rng
    worst_gap, non_monotone, n = 0.0, 0, 0
    while n < instances:
        centers = rng.uniform(-1, 1, size=(K, C))
        z = rng.uniform(-1, 1, size=C)
        d = np.sort(_energies(z, centers, "euclid"))
        if d[1] - d[0] < min_margin:
            continue
        out = hard_limit_probe(z, centers, taus)
        n += 1
        non_monotone += int(not out.monotone)
        worst_gap = max(worst_gap, 1.0 - out.final_p, 0.0 if out.ok else np.inf)
    violation = worst_gap if non_monotone == 0 else np.inf
    return OracleReport("hard_limit", n, float(violation), target,
                        {"non_monotone": non_monotone, "taus": list(taus)})


# ---------------------------------------------------------------- lipschitz

def lipschitz_bound(K: int, tau: float, kernel: str, B: float = 1.0) -> float:
    return 2.0 * K / tau if kernel == "euclid" else 4.0 * B * K / tau


def _ball(rng, n, C, B):
    v = rng.standard_normal((n, C))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * (B * rng.uniform(0, 1, size=(n, 1)) ** (1.0 / C))


def lipschitz_probe(centers, tau: float, kernel: str = "euclid", pairs: int = 1000, rng=None,
                    B: float = 1.0, min_distance: float = 1e-6) -> OracleReport:
    """Empirical max of ||p(z1) - p(z2)||_1 / ||z1 - z2|| against the proven bound.

    Half of the pairs are independent draws from the radius-B ball, half are
    close neighbours, which probe the local slope.
    """
    rng = make_rng(0, "lipschitz") if rng is None else rng
    centers = np.asarray(centers, dtype=np.float64)
    K, C = centers.shape
    bound = lipschitz_bound(K, tau, kernel, B)
    worst_ratio, worst_violation, rejected, identical, n = 0.0, -np.inf, 0, 0, 0
    while n < pairs:
        z1 = _ball(rng, 1, C, B)[0]
        if n % 2:
            z2 = z1 + 1e-3 * rng.standard_normal(C)
            if np.linalg.norm(z2) > B:
                continue
        else:
            z2 = _ball(rng, 1, C, B)[0]
        if kernel == "euclid" and min(_energies(z1, centers, kernel).min(),
                                      _energies(z2, centers, kernel).min()) < min_distance:
            rejected += 1
            continue
        n += 1
        dz = float(np.linalg.norm(z1 - z2))
        if dz == 0.0:
            identical += 1
            continue
        P = _assignment.soft_assign(_assignment.pairwise_energy(np.vstack([z1, z2]), centers, kernel), tau).probs
        dp = float(np.abs(P[0] - P[1]).sum())
        worst_ratio = max(worst_ratio, dp / dz)
        worst_violation = max(worst_violation, dp - bound * dz)
    return OracleReport("lipschitz", n, float(max(worst_violation, 0.0)), 0.0,
                        {"K": K, "tau": tau, "kernel": kernel, "bound": bound, "max_ratio": worst_ratio,
                         "rejected": rejected, "identical_pairs": identical})


def centroid_continuity(z, centers, j: int, deltas, tau: float, kernel: str = "euclid", rng=None):
    """||p(z; c_j) - p(z; c_j + delta u)||_1 for each delta along a random unit u."""
    rng = make_rng(0, "centroid") if rng is None else rng
    centers = np.asarray(centers, dtype=np.float64)
    u = rng.standard_normal(centers.shape[1])
    u /= np.linalg.norm(u)
    z = np.atleast_2d(z)
    base = _assignment.soft_assign(_assignment.pairwise_energy(z, centers, kernel), tau).probs[0]
    out = []
    for d in deltas:
        moved = centers.copy()
        moved[j] += d * u
        p = _assignment.soft_assign(_assignment.pairwise_energy(z, moved, kernel), tau).probs[0]
        out.append(float(np.abs(p - base).sum()))
    return np.array(out)


# ---------------------------------------------------------------- regularizers

def _random_assignment(rng, T, K, concentration=1.0):
    p = rng.dirichlet(np.full(K, concentration), size=T)
    return _assignment.AssignmentMatrix(p, np.zeros_like(p), 1.0)


def regularizer_optima_probe(K: int = 8, samples: int = 1000, rng=None) -> OracleReport:
    """Optima of the peak, bins and usage regularizers.

    Checks: peak is exactly 0 on one-hot rows and positive on random rows; bins
    is 1/K at the uniform marginal and larger after random on-simplex
    perturbations; the usage term matches scipy's KL(pbar || uniform).
    """
    rng = make_rng(0, "regularizers") if rng is None else rng
    onehot = np.eye(K)[rng.integers(0, K, size=samples)]
    peak_onehot = _losses.peak_loss(_assignment.AssignmentMatrix(onehot, np.zeros_like(onehot), 1.0))
    peak_fail = 0
    bins_fail = 0
    kl_err = 0.0
    for _ in range(samples):
        row = rng.dirichlet(np.ones(K))[None]
        if row.max() < 1.0 and not _losses.peak_loss(_assignment.AssignmentMatrix(row, row, 1.0)) > 0:
            peak_fail += 1
        d = rng.standard_normal(K)
        d -= d.mean()
        d *= rng.uniform(1e-3, 1.0 / K) / np.abs(d).max()
        pbar = np.full(K, 1.0 / K) + d
        single = _assignment.AssignmentMatrix(pbar[None], pbar[None], 1.0)
        if not _losses.bins_loss(single) > 1.0 / K:
            bins_fail += 1
        a = _random_assignment(rng, 16, K, concentration=rng.uniform(0.1, 2.0))
        _, r_usage = _losses.theory_regularizers(a)
        ref = float(stats.entropy(a.probs.mean(axis=0), np.full(K, 1.0 / K)))
        kl_err = max(kl_err, abs(r_usage - ref))
    uniform = np.full((1, K), 1.0 / K)
    bins_uniform = _losses.bins_loss(_assignment.AssignmentMatrix(uniform, uniform, 1.0))
    structural = (peak_onehot != 0.0) + peak_fail + bins_fail + (abs(bins_uniform - 1.0 / K) > 1e-15)
    violation = np.inf if structural else kl_err
    return OracleReport("regularizers", samples, float(violation), KL_TOL,
                        {"peak_onehot": peak_onehot, "peak_failures": peak_fail, "bins_uniform": bins_uniform,
                         "bins_failures": bins_fail, "kl_max_abs_error": kl_err})


# ---------------------------------------------------------------- gradients

def random_instance(rng, kernel=None, with_decoder=None):
    T = int(rng.integers(2, 6))
    K = int(rng.integers(2, 6))
    C = int(rng.integers(1, 4))
    kernel = kernel or ("euclid", "squared")[int(rng.integers(0, 2))]
    with_decoder = bool(rng.integers(0, 2)) if with_decoder is None else with_decoder
    D = int(rng.integers(1, 5)) if with_decoder else C
    return _losses.Instance(
        x=rng.uniform(-1, 1, size=(T, D)),
        z_e=rng.uniform(-1, 1, size=(T, C)),
        centers=rng.uniform(-1, 1, size=(K, C)),
        tau=float(rng.uniform(0.3, 2.0)),
        kernel=kernel,
        lambda_peak=float(rng.uniform(0, 1)),
        lambda_bins=float(rng.uniform(0, 1)),
        decoder=rng.standard_normal((D, C)) if with_decoder else None,
    )


def instance_gradient_error(inst, h: float = 1e-5) -> float:
    """Worst relative error of the analytic gradients against central differences."""
    g = _losses.loss_gradients(inst, "soft")
    shapes = {"z_e": inst.z_e.shape, "centers": inst.centers.shape}
    if inst.decoder is not None:
        shapes["decoder"] = inst.decoder.shape
    worst = 0.0
    for name, shape in shapes.items():
        def f(v, name=name, shape=shape):
            kw = {f: getattr(inst, f) for f in ("x", "z_e", "centers", "tau", "kernel",
                                               "lambda_peak", "lambda_bins", "decoder")}
            kw[name] = v.reshape(shape)
            return _losses.objective(_losses.Instance(**kw), "soft")
        num = finite_diff_grad(f, getattr(inst, name), h)
        worst = max(worst, relative_error(getattr(g, name), num))
    return worst


def gradient_probe(configs: int = 50, rng=None, h: float = 1e-5, tol: float = GRADIENT_TOL) -> OracleReport:
    rng = make_rng(0, "gradients") if rng is None else rng
    errs = [instance_gradient_error(random_instance(rng), h) for _ in range(configs)]
    return OracleReport("gradients", configs, float(max(errs)), tol,
                        {"h": h, "median_error": float(np.median(errs))})


# ---------------------------------------------------------------- suites

def run_suite(selector: str = "all", seed: int = 0) -> list[OracleReport]:
    """Run the selected oracle suites with fixed instance counts and seeds."""
    names = SELECTORS if selector == "all" else (selector,)
    reports = []
    for name in names:
        rng = make_rng(seed, f"verify:{name}")
        if name == "free_energy":
            reports.append(free_energy_probe(100, rng=rng))
        elif name == "hard_limit":
            reports.append(hard_limit_suite(100, rng=rng))
        elif name == "lipschitz":
            for K in (2, 8, 64):
                for tau in (0.1, 0.5, 1.0):
                    centers = _ball(rng, K, 4, 1.0)
                    r = lipschitz_probe(centers, tau, "euclid", 1000, rng)
                    r.name = f"lipschitz[K={K},tau={tau}]"
                    reports.append(r)
        elif name == "regularizers":
            reports.append(regularizer_optima_probe(8, 1000, rng))
        elif name == "gradients":
            reports.append(gradient_probe(50, rng))
        else:
            raise ValueError(f"unknown selector {name!r}; expected 'all' or one of {SELECTORS}")
    return reports
