"""Readout mitigation, exponential relaxation fits and bootstrap intervals."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .noise import ConfusionMatrix

MITIGATION_SCHEMA = "nvqnode.mitigation/1"
FIT_SCHEMA = "nvqnode.fit/1"


@dataclass
class PopulationVector:
    probs: np.ndarray
    n_samples: int | None = None
    preclip: np.ndarray | None = None
    sigma: np.ndarray | None = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)

    @classmethod
    def from_counts(cls, counts) -> "PopulationVector":
        counts = np.asarray(counts, dtype=float)
        n = counts.sum()
        if n <= 0:
            raise ValueError("no counts")
        p = counts / n
        return cls(p, int(n), sigma=np.sqrt(p * (1 - p) / n))

    @property
    def slack(self) -> float:
        """Most negative pre-clip entry (0 when nothing was clipped)."""
        if self.preclip is None:
            return 0.0
        return float(min(self.preclip.min(), 0.0))


def joint_confusion(confusions: Sequence[ConfusionMatrix | None]) -> np.ndarray:
    """Tensor product over readouts; readout 0 is the least significant bit."""
    a = np.eye(1)
    for c in confusions:
        m = np.eye(2) if c is None else c.matrix
        a = np.kron(m, a)
    return a


def mitigate_readout(raw: PopulationVector, confusions: Sequence[ConfusionMatrix | None],
                     layout: Sequence[int] | None = None) -> PopulationVector:
    """Invert independent per-readout confusion on an outcome distribution.

    ``layout[k]`` is the outcome index produced by readout-bit pattern ``k``;
    ``None`` means outcomes are already indexed by the bit pattern.
    """
    a = joint_confusion(confusions)
    d = a.shape[0]
    if raw.probs.shape != (d,):
        raise ValueError(f"population length {raw.probs.shape} does not match {d} readout patterns")
    for c in confusions:
        if c is not None and abs(np.linalg.det(c.matrix)) < 1e-12:
            raise np.linalg.LinAlgError("singular readout confusion matrix")
    perm = np.arange(d) if layout is None else np.asarray(layout)
    if sorted(perm.tolist()) != list(range(d)):
        raise ValueError("layout must be a permutation of the outcome indices")
    q = raw.probs[perm]
    a_inv = np.linalg.inv(a)
    est = a_inv @ q
    sigma = None
    if raw.n_samples:
        cov = (np.diag(q) - np.outer(q, q)) / raw.n_samples
        sigma_pat = np.sqrt(np.clip(np.diag(a_inv @ cov @ a_inv.T), 0, None))
        sigma = np.empty(d)
        sigma[perm] = sigma_pat
    pre = np.empty(d)
    pre[perm] = est
    clipped = np.clip(pre, 0, None)
    total = clipped.sum()
    out = clipped / total if total > 0 else clipped
    return PopulationVector(out, raw.n_samples, pre, sigma)


def forward_confusion(true: PopulationVector, confusions, layout=None) -> PopulationVector:
    """Apply readout confusion to an exact population vector."""
    a = joint_confusion(confusions)
    d = a.shape[0]
    perm = np.arange(d) if layout is None else np.asarray(layout)
    out = np.empty(d)
    out[perm] = a @ true.probs[perm]
    return PopulationVector(out, true.n_samples)


# -- exponential relaxation fit -------------------------------------------------

DEFAULT_STARTS_MS = np.logspace(0, 3, 25)


@dataclass
class FitResult:
    p_i: float
    t1l: float
    p_f: float
    ci_p_i: tuple
    ci_t1l: tuple
    ci_p_f: tuple
    rss: float
    chi2: float
    unbounded: bool = False
    boot_t1l: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return dict(p_i=self.p_i, t1l_ms=self.t1l, p_f=self.p_f,
                    p_i_lo=self.ci_p_i[0], p_i_hi=self.ci_p_i[1],
                    t1l_lo=self.ci_t1l[0], t1l_hi=self.ci_t1l[1],
                    p_f_lo=self.ci_p_f[0], p_f_hi=self.ci_p_f[1],
                    rss=self.rss, chi2=self.chi2, unbounded=self.unbounded)


def decay_model(t, p_i, t1l, p_f):
    return p_i * np.exp(-np.asarray(t) / t1l) + p_f


def _linear_amplitudes(x, y, w, tau):
    e = np.exp(-x / tau)
    a = np.stack([e * w, w], axis=1)
    coef, *_ = np.linalg.lstsq(a, y * w, rcond=None)
    return coef


def _refine(x, y, w, theta0):
    def resid(th):
        return (th[0] * np.exp(-x / th[1]) + th[2] - y) * w

    return least_squares(resid, theta0, bounds=([-np.inf, 1e-12, -np.inf], np.inf),
                         x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)


def fit_exponential(points, weighted: bool = True, starts=None, n_boot: int = 1000,
                    seed: int = 0) -> FitResult:
    """Fit p = p_i exp(-t/T) + p_f to (t, p, sigma) points.

    Multi-start over ``starts`` (T values, default 25 log-spaced in 1..1000 ms)
    with amplitude/offset solved linearly at each start, then joint
    refinement. Ties go to the lowest residual, then the smallest T.
    Intervals are 68% percentile intervals of a parametric bootstrap.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must be (t, p, sigma) triples")
    if len(pts) < 4:
        raise ValueError("need at least 4 points")
    t, y, sig = pts.T
    if len(np.unique(t)) != len(t):
        raise ValueError("time values must be distinct")
    if weighted and np.any(sig <= 0):
        raise ValueError("weighted fit needs positive sigmas")
    # work in units of a power of two so rescaling t rescales T exactly
    t_ref = 2.0 ** math.ceil(math.log2(max(np.max(np.abs(t)), 1e-300)))
    x = t / t_ref
    w = 1 / sig if weighted else np.ones_like(t)
    starts = DEFAULT_STARTS_MS if starts is None else np.asarray(starts, dtype=float)

    if np.ptp(y) == 0:
        return _flat_result(y, sig, w)

    best = None
    for tau0 in np.sort(starts) / t_ref:
        p_i0, p_f0 = _linear_amplitudes(x, y, w, tau0)
        sol = _refine(x, y, w, np.array([p_i0, tau0, p_f0]))
        if not sol.success or not np.all(np.isfinite(sol.x)):
            continue
        cost = float(sol.cost)
        if best is None or cost < best[0] * (1 - 1e-12) or (
                abs(cost - best[0]) <= 1e-12 * max(best[0], 1e-300) and sol.x[1] < best[1][1]):
            best = (cost, sol.x.copy())
    if best is None:
        raise RuntimeError("exponential fit did not converge from any start")
    theta = best[1]
    if theta[1] > 1e6 or abs(theta[0]) < 1e-12:
        return _flat_result(y, sig, w)

    resid = theta[0] * np.exp(-x / theta[1]) + theta[2] - y
    rss = float(np.sum(resid ** 2))
    chi2 = float(np.sum((resid * w) ** 2))
    noise_sd = sig if weighted else np.full_like(y, math.sqrt(rss / max(len(y) - 3, 1)))

    boot = None
    cis = [(theta[0], theta[0]), (theta[1], theta[1]), (theta[2], theta[2])]
    if n_boot:
        rng = np.random.default_rng(seed)
        model = theta[0] * np.exp(-x / theta[1]) + theta[2]
        ys = model + rng.standard_normal((n_boot, len(y))) * noise_sd
        boot = _batched_lm(x, ys, w, theta)
        ok = np.all(np.isfinite(boot), axis=1) & (boot[:, 1] > 0)
        boot = boot[ok]
        if len(boot):
            lo, hi = np.percentile(boot, [15.865, 84.135], axis=0)
            cis = [(min(lo[k], theta[k]), max(hi[k], theta[k])) for k in range(3)]
    scale = [1.0, t_ref, 1.0]
    cis = [(c[0] * s, c[1] * s) for c, s in zip(cis, scale)]
    return FitResult(float(theta[0]), float(theta[1] * t_ref), float(theta[2]),
                     tuple(map(float, cis[0])), tuple(map(float, cis[1])), tuple(map(float, cis[2])),
                     rss, chi2, False, None if boot is None else boot[:, 1] * t_ref)


def _flat_result(y, sig, w) -> FitResult:
    mean = float(np.average(y, weights=w ** 2))
    rss = float(np.sum((y - mean) ** 2))
    return FitResult(0.0, math.inf, mean, (0.0, 0.0), (math.inf, math.inf), (mean, mean), rss,
                     float(np.sum(((y - mean) * w) ** 2)), True)


def _batched_lm(x, ys, w, theta0, iters: int = 100) -> np.ndarray:
    """Levenberg-Marquardt for many datasets at once (shared x, w)."""
    b = ys.shape[0]
    th = np.tile(theta0, (b, 1))
    lam = np.full(b, 1e-3)

    def cost_of(th):
        r = (th[:, :1] * np.exp(-x / th[:, 1:2]) + th[:, 2:3] - ys) * w
        return r, np.sum(r * r, axis=1)

    r, cost = cost_of(th)
    for _ in range(iters):
        e = np.exp(-x / th[:, 1:2])
        jac = np.stack([e, th[:, :1] * x / th[:, 1:2] ** 2 * e, np.ones_like(e)], axis=2) * w[:, None]
        jtj = np.einsum("bij,bik->bjk", jac, jac)
        jtr = np.einsum("bij,bi->bj", jac, r)
        diag = np.einsum("bjj->bj", jtj)
        a = jtj + lam[:, None, None] * np.einsum("bj,jk->bjk", diag, np.eye(3))
        try:
            step = np.linalg.solve(a, -jtr[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.zeros_like(th)
        trial = th + step
        trial[:, 1] = np.where(trial[:, 1] > 0, trial[:, 1], th[:, 1] / 2)
        r_new, c_new = cost_of(trial)
        better = c_new < cost
        th = np.where(better[:, None], trial, th)
        r = np.where(better[:, None], r_new, r)
        cost = np.where(better, c_new, cost)
        lam = np.where(better, lam / 3, lam * 4)
        if np.all(np.abs(step) <= 1e-12 * (np.abs(th) + 1e-12)):
            break
    return th


# -- bootstrap ---------------------------------------------------------------------

def bootstrap_ci(records, statistic: Callable, resamples: int = 1000, seed: int = 0,
                 level: float = 0.68) -> tuple[float, float]:
    """Percentile interval of ``statistic`` over resampling with replacement."""
    if resamples < 100:
        raise ValueError("need at least 100 resamples")
    arr = records if isinstance(records, np.ndarray) else None
    n = len(records)
    if n == 0:
        raise ValueError("no records to resample")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(resamples, n))
    if arr is not None:
        vals = np.array([statistic(arr[i]) for i in idx])
    else:
        vals = np.array([statistic([records[j] for j in i]) for i in idx])
    tail = (1 - level) / 2 * 100
    lo, hi = np.percentile(vals, [tail, 100 - tail])
    return float(lo), float(hi)
