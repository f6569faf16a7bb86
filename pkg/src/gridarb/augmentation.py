"""Scenario augmentation: per-(node, timestep) Gaussian mixtures + copula.

Each augmented column gets one univariate Gaussian mixture per timestep
of the day, fit by EM with BIC model selection.  Day-to-day dependence
across all (column, timestep) margins is captured by a Gaussian or
Student-t copula over D = columns x timesteps dimensions; synthetic
days are drawn from the copula and mapped back through the mixture
quantiles, so marginals and intra-day correlation both survive.

EM settings (fixed here because nothing upstream pins them): k-quantile
initialization of means, at most 200 iterations, absolute log-likelihood
improvement tolerance 1e-7, and a variance floor of
1e-9 * (data range)^2 + 1e-12 which also absorbs constant data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import optimize, special, stats

from .errors import NotEnoughRows, TooFewSamples, UOutOfRange
from .timeseries import TimeSeriesDataset

__all__ = [
    "GmmComponentSet",
    "CopulaModel",
    "GmcModel",
    "fit_gmm",
    "gmm_cdf",
    "gmm_quantile",
    "fit_copula",
    "sample_copula",
    "augment_dataset",
]

_LOG_2PI = math.log(2.0 * math.pi)
_U_LO = np.nextafter(0.0, 1.0)
_U_HI = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class GmmComponentSet:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    k: int
    bic: float = math.nan
    bic_by_k: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        for name in ("weights", "means", "variances"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        if (self.variances <= 0).any():
            raise ValueError("mixture variances must be positive")


@dataclass(frozen=True)
class CopulaModel:
    family: str  # "gaussian" | "t"
    correlation: np.ndarray
    dof: float | None = None

    def __post_init__(self):
        corr = np.asarray(self.correlation, dtype=float)
        corr.setflags(write=False)
        object.__setattr__(self, "correlation", corr)
        if self.family not in ("gaussian", "t"):
            raise ValueError(f"unknown copula family {self.family!r}")
        if self.family == "t" and not (self.dof and self.dof > 0):
            raise ValueError("t copula requires positive dof")

    @property
    def dim(self) -> int:
        return self.correlation.shape[0]


@dataclass(frozen=True)
class GmcModel:
    margins: dict[tuple[str, int], GmmComponentSet]  # (column, timestep)
    copula: CopulaModel | None  # None for independent margins
    columns: tuple[str, ...]  # augmented columns in margin order
    rows_per_day: int


def _batch_log_density(xs, weights, means, variances):
    # xs (m, n); parameters (m, k) -> (m, n, k) log densities + log weight
    z = (xs[:, :, None] - means[:, None, :]) ** 2 / variances[:, None, :]
    logw = np.log(np.maximum(weights, 1e-300))
    return logw[:, None, :] - 0.5 * (
        z + np.log(variances)[:, None, :] + _LOG_2PI)


def _em_batch(xs: np.ndarray, k: int, floors: np.ndarray) -> tuple:
    """Run EM for a fixed k on m independent margins at once.

    Margins are frozen individually the moment their log-likelihood
    improvement drops below 1e-7, so batching changes only the speed,
    not the estimates.
    """
    m, n = xs.shape
    order = np.sort(xs, axis=1)
    # means start at the k interior quantiles (2i+1)/(2k)
    idx = np.minimum(((2 * np.arange(k) + 1) * n) // (2 * k), n - 1)
    means = order[:, idx].astype(float)
    variances = np.repeat(np.maximum(xs.var(axis=1), floors)[:, None], k, axis=1)
    weights = np.full((m, k), 1.0 / k)

    loglik = np.full(m, -np.inf)
    active = np.arange(m)
    for _ in range(200):
        x = xs[active]
        logp = _batch_log_density(x, weights[active], means[active],
                                  variances[active])
        lse = special.logsumexp(logp, axis=2)
        new_loglik = lse.sum(axis=1)
        resp = np.exp(logp - lse[:, :, None])
        mass = resp.sum(axis=1)
        safe = np.maximum(mass, 1e-300)
        mu = (resp * x[:, :, None]).sum(axis=1) / safe
        var = (resp * (x[:, :, None] - mu[:, None, :]) ** 2).sum(axis=1) / safe
        weights[active] = mass / n
        means[active] = mu
        variances[active] = np.maximum(var, floors[active, None])
        converged = new_loglik - loglik[active] < 1e-7
        loglik[active] = new_loglik
        active = active[~converged]
        if active.size == 0:
            break
    if active.size:  # hit the iteration cap: report the final likelihood
        logp = _batch_log_density(xs[active], weights[active], means[active],
                                  variances[active])
        loglik[active] = special.logsumexp(logp, axis=2).sum(axis=1)
    # renormalize away accumulated rounding in the weights
    weights = weights / weights.sum(axis=1, keepdims=True)
    return weights, means, variances, loglik


def _fit_gmm_batch(xs: np.ndarray, k_max: int) -> list[GmmComponentSet]:
    """BIC-select a mixture independently for each row of xs."""
    m, n = xs.shape
    if n < 8:
        raise TooFewSamples(f"need at least 8 samples per margin, got {n}")
    spread = xs.max(axis=1) - xs.min(axis=1)
    floors = 1e-9 * spread * spread + 1e-12
    log_n = math.log(n)

    per_k = [_em_batch(xs, k, floors) for k in range(1, k_max + 1)]
    bics = np.stack([(3 * (k + 1) - 1) * log_n - 2.0 * fit[3]
                     for k, fit in enumerate(per_k)], axis=1)  # (m, k_max)
    chosen = bics.argmin(axis=1)
    out = []
    for i in range(m):
        j = int(chosen[i])
        weights, means, variances, _ = per_k[j]
        out.append(GmmComponentSet(
            weights=weights[i], means=means[i], variances=variances[i],
            k=j + 1, bic=float(bics[i, j]), bic_by_k=tuple(bics[i])))
    return out


def fit_gmm(samples, k_max: int = 5) -> GmmComponentSet:
    """EM-fit mixtures for k = 1..k_max and keep the BIC minimizer.

    BIC = p ln(n) - 2 lnL with p = 3k - 1 free parameters.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 8:
        raise TooFewSamples(f"need at least 8 samples, got {x.size}")
    if not np.isfinite(x).all():
        raise ValueError("samples must be finite")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    return _fit_gmm_batch(x[None, :], k_max)[0]


def _stack_margins(gmms) -> tuple:
    """Pad a list of mixtures to a common k with zero-weight components."""
    k_pad = max(g.k for g in gmms)
    m = len(gmms)
    weights = np.zeros((m, k_pad))
    means = np.zeros((m, k_pad))
    variances = np.ones((m, k_pad))
    for i, g in enumerate(gmms):
        weights[i, :g.k] = g.weights
        means[i, :g.k] = g.means
        variances[i, :g.k] = g.variances
    return weights, means, variances


def _batch_cdf(weights, means, variances, x):
    # x (m, q) -> (m, q); zero-weight padding contributes nothing
    z = (x[:, :, None] - means[:, None, :]) / np.sqrt(variances)[:, None, :]
    return (weights[:, None, :] * special.ndtr(z)).sum(axis=2)


def _batch_quantile(weights, means, variances, u):
    sigma = np.sqrt(variances)
    real = weights > 0.0
    lo_pts = np.where(real, means - 14.0 * sigma, np.inf).min(axis=1)
    hi_pts = np.where(real, means + 14.0 * sigma, -np.inf).max(axis=1)
    lo = np.broadcast_to(lo_pts[:, None], u.shape).copy()
    hi = np.broadcast_to(hi_pts[:, None], u.shape).copy()
    scale = max(1.0, float(np.abs(lo).max()), float(np.abs(hi).max()))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        too_low = _batch_cdf(weights, means, variances, mid) < u
        lo = np.where(too_low, mid, lo)
        hi = np.where(too_low, hi, mid)
        # the bracket stops shrinking once it reaches float resolution
        if float(np.max(hi - lo)) < 1e-15 * scale:
            break
    return 0.5 * (lo + hi)


def gmm_cdf(gmm: GmmComponentSet, x):
    """Mixture CDF: weighted sum of normal CDFs.  Accepts scalars or arrays."""
    arr = np.asarray(x, dtype=float)
    out = _batch_cdf(gmm.weights[None, :], gmm.means[None, :],
                     gmm.variances[None, :], np.atleast_1d(arr)[None, :])[0]
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def gmm_quantile(gmm: GmmComponentSet, u):
    """Invert the mixture CDF by bisection to 1e-10 absolute tolerance in u."""
    arr = np.asarray(u, dtype=float)
    flat = np.atleast_1d(arr)
    if ((flat <= 0.0) | (flat >= 1.0)).any() or not np.isfinite(flat).all():
        raise UOutOfRange("quantile argument must lie strictly in (0, 1)")
    out = _batch_quantile(gmm.weights[None, :], gmm.means[None, :],
                          gmm.variances[None, :], flat[None, :])[0]
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def _repair_psd(corr: np.ndarray) -> np.ndarray:
    """Clip eigenvalues at 1e-8 and renormalize to unit diagonal."""
    sym = 0.5 * (corr + corr.T)
    eigval, eigvec = np.linalg.eigh(sym)
    if eigval.min() < -1e-10:
        warnings.warn(
            f"correlation matrix indefinite (min eigenvalue {eigval.min():.2e}); "
            "repairing", stacklevel=3)
    clipped = np.maximum(eigval, 1e-8)
    repaired = (eigvec * clipped) @ eigvec.T
    d = np.sqrt(np.diag(repaired))
    repaired = repaired / np.outer(d, d)
    repaired = 0.5 * (repaired + repaired.T)
    np.fill_diagonal(repaired, 1.0)
    return repaired


def _t_copula_loglik(scores_t: np.ndarray, corr: np.ndarray, dof: float) -> float:
    n, d = scores_t.shape
    cho = np.linalg.cholesky(corr)
    logdet = 2.0 * float(np.sum(np.log(np.diag(cho))))
    w = np.linalg.solve(cho, scores_t.T)
    q = (w * w).sum(axis=0)
    joint = (special.gammaln((dof + d) / 2.0) - special.gammaln(dof / 2.0)
             - 0.5 * d * math.log(dof * math.pi) - 0.5 * logdet
             - 0.5 * (dof + d) * np.log1p(q / dof))
    margin = stats.t.logpdf(scores_t, df=dof).sum(axis=1)
    return float((joint - margin).sum())


def fit_copula(uniforms, family: str = "gaussian") -> CopulaModel:
    """Fit a copula on an (n, D) matrix of uniforms.

    Margins are sent to normal scores; the correlation of the scores is
    repaired to positive definiteness.  For the t family the degrees of
    freedom are fit by a 1-D likelihood search over [2, 60].
    """
    u = np.asarray(uniforms, dtype=float)
    if u.ndim != 2:
        raise ValueError("uniforms must be a 2-D matrix")
    n, d = u.shape
    if n < 4:
        raise NotEnoughRows(f"need at least 4 rows to fit a copula, got {n}")
    if ((u <= 0.0) | (u >= 1.0)).any() or not np.isfinite(u).all():
        raise UOutOfRange("copula input must lie strictly in (0, 1)")
    if n < d:
        warnings.warn(f"fitting a {d}-dimensional copula on only {n} rows; "
                      "correlation estimates will be noisy", stacklevel=2)

    scores = special.ndtri(u)
    degenerate = scores.std(axis=0) < 1e-12
    if degenerate.any():
        warnings.warn(
            f"{int(degenerate.sum())} constant margin(s); their correlation "
            "rows are set to identity", stacklevel=2)
    with warnings.catch_warnings():
        # zero-variance columns divide by zero inside corrcoef; their
        # rows are replaced with identity just below
        warnings.simplefilter("ignore", RuntimeWarning)
        corr = np.atleast_2d(np.corrcoef(scores, rowvar=False))
    if degenerate.any():
        corr[degenerate, :] = 0.0
        corr[:, degenerate] = 0.0
    corr[~np.isfinite(corr)] = 0.0
    np.fill_diagonal(corr, 1.0)
    corr = _repair_psd(corr)

    if family == "gaussian":
        return CopulaModel(family="gaussian", correlation=corr)
    if family != "t":
        raise ValueError(f"unknown copula family {family!r}")

    def negative_loglik(dof: float) -> float:
        scores_t = stats.t.ppf(u, df=dof)
        return -_t_copula_loglik(scores_t, corr, dof)

    result = optimize.minimize_scalar(negative_loglik, bounds=(2.0, 60.0),
                                      method="bounded",
                                      options={"xatol": 1e-3})
    return CopulaModel(family="t", correlation=corr, dof=float(result.x))


def sample_copula(copula: CopulaModel, n: int, seed: int) -> np.ndarray:
    """Draw an (n, D) matrix of dependent uniforms; deterministic per seed."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(copula.correlation)
    z = rng.standard_normal((n, copula.dim)) @ chol.T
    if copula.family == "gaussian":
        u = special.ndtr(z)
    else:
        g = rng.chisquare(copula.dof, size=n)
        x = z / np.sqrt(g / copula.dof)[:, None]
        u = stats.t.cdf(x, df=copula.dof)
    return np.clip(u, _U_LO, _U_HI)


def _augmented_columns(ds: TimeSeriesDataset, include_pv: bool,
                       include_price: bool) -> tuple[str, ...]:
    # active demand is always augmented; everything else is opt-in so the
    # copula dimension stays one margin per (node, timestep)
    picked = []
    for name, ck in ds.kinds.items():
        if ck.kind == "active_demand":
            picked.append(name)
        elif ck.kind == "pv" and include_pv:
            picked.append(name)
        elif ck.kind == "price" and include_price:
            picked.append(name)
    return tuple(sorted(picked))


def fit_gmc(ds: TimeSeriesDataset, family: str = "gaussian_copula",
            k_max: int = 5, include_pv: bool = False,
            include_price: bool = False) -> GmcModel:
    """Fit mixture margins per (column, timestep) plus the chosen copula."""
    if family not in ("gmm_independent", "gaussian_copula", "t_copula"):
        raise ValueError(f"unknown augmentation family {family!r}")
    columns = _augmented_columns(ds, include_pv, include_price)
    if not columns:
        raise ValueError("no augmentable columns in dataset")
    h = ds.rows_per_day
    margins = {}
    uniforms = np.empty((ds.day_count, len(columns) * h))
    for ci, name in enumerate(columns):
        day_values = ds.day_matrix(name)
        fitted = _fit_gmm_batch(np.ascontiguousarray(day_values.T), k_max)
        for step in range(h):
            margins[(name, step)] = fitted[step]
        stacked = _stack_margins(fitted)
        uniforms[:, ci * h:(ci + 1) * h] = _batch_cdf(
            *stacked, np.ascontiguousarray(day_values.T)).T
    copula = None
    if family != "gmm_independent":
        cop_family = "gaussian" if family == "gaussian_copula" else "t"
        with warnings.catch_warnings():
            # fewer days than margins is the normal regime here
            warnings.simplefilter("ignore", UserWarning)
            copula = fit_copula(np.clip(uniforms, _U_LO, _U_HI), cop_family)
    return GmcModel(margins=margins, copula=copula, columns=columns,
                    rows_per_day=h)


def augment_dataset(ds: TimeSeriesDataset, family: str, n_days: int,
                    seed: int, k_max: int = 5, include_pv: bool = False,
                    include_price: bool = False) -> TimeSeriesDataset:
    """Sample n_days synthetic days with the source schema.

    Demand columns are augmented through the fitted GMC model (negative
    sampled demand is kept — some nodes legitimately export).  PV and
    price columns are augmented only when the corresponding flag is set
    and are clamped at zero; columns left un-augmented cycle through the
    source days unchanged.
    """
    if ds.day_count < 8:
        raise TooFewSamples(
            f"augmentation needs at least 8 complete days, got {ds.day_count}")
    if n_days < 1:
        raise ValueError("n_days must be at least 1")
    model = fit_gmc(ds, family=family, k_max=k_max, include_pv=include_pv,
                    include_price=include_price)
    h = ds.rows_per_day
    d = len(model.columns) * h
    if model.copula is not None:
        u = sample_copula(model.copula, n_days, seed)
    else:
        u = np.clip(np.random.default_rng(seed).random((n_days, d)),
                    _U_LO, _U_HI)

    start = ds.timestamps[0] + pd.Timedelta(days=ds.day_count)
    stamps = pd.date_range(start, periods=n_days * h,
                           freq=pd.Timedelta(minutes=ds.resolution_minutes))

    columns = {}
    for name in ds.columns:
        if name in model.columns:
            ci = model.columns.index(name)
            stacked = _stack_margins(
                [model.margins[(name, step)] for step in range(h)])
            block = np.ascontiguousarray(u[:, ci * h:(ci + 1) * h].T)
            out = _batch_quantile(*stacked, block).T
            if ds.kinds[name].kind in ("pv", "price"):
                out = np.maximum(out, 0.0)
        else:
            source = ds.day_matrix(name)
            out = source[np.arange(n_days) % ds.day_count, :]
        values = np.ascontiguousarray(out.reshape(-1))
        values.setflags(write=False)
        columns[name] = values

    return TimeSeriesDataset(timestamps=pd.DatetimeIndex(stamps),
                             columns=columns, kinds=dict(ds.kinds),
                             resolution_minutes=ds.resolution_minutes)
