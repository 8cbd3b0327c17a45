"""Household-size selection: BIC, the gap-threshold classifier, gamma outliers."""
from __future__ import annotations

import logging
import math
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize, stats

from .data_model import AccountView, IdentificationResult, SelectionReport
from .errors import DegenerateAccountError, FitError, InsufficientDataError
from .identification import fit_single, identify

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (1, 2, 3)


def bic_penalty(n: int, d: int, m: int) -> float:
    return 2.0 * n * (d + 1) * math.log(m) / m


def bic_value(mse_n: float, n: int, d: int, m: int, sigma2: float) -> float:
    """``MSE_n / (2 sigma^2) + 2 n (d + 1) log(m) / m``."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be > 0")
    return mse_n / (2.0 * sigma2) + bic_penalty(n, d, m)


def bic(view: AccountView, result: IdentificationResult, sigma2: float) -> float:
    return bic_value(result.mse, result.n, view.d, view.m, sigma2)


def bic_tau(sigma2: float, d: int, constant: str = "consistent") -> float:
    """Threshold making :func:`classify_threshold` agree with a BIC comparison.

    ``"consistent"`` is ``4 sigma^2 (d + 1)``, the value implied by the BIC
    penalty used here; ``"d_plus_2"`` is the alternative ``2 sigma^2 (d + 2)``,
    kept for comparison.
    """
    if constant == "consistent":
        return 4.0 * sigma2 * (d + 1)
    if constant == "d_plus_2":
        return 2.0 * sigma2 * (d + 2)
    raise ValueError("constant must be 'consistent' or 'd_plus_2'")


def classify_threshold(mse_1: float, mse_2: float, m: int, tau: float) -> bool:
    """Composite when ``(mse_1 - mse_2) - tau log(m) / m > 0``."""
    if m < 2:
        raise ValueError("m must be >= 2")
    return (mse_1 - mse_2) - tau * math.log(m) / m > 0


def normalized_gap(mse_a: float, mse_b: float, m: int) -> float:
    """``(mse_a - mse_b) m / log m``."""
    return (mse_a - mse_b) * m / math.log(m)


def fit_sizes(view: AccountView, sizes: Sequence[int] = DEFAULT_SIZES, algorithm: str = "em",
              seed=None, **options) -> dict:
    """Identification result per household size.

    Size 1 is plain regression. A size whose every run degenerates takes the
    fit of the next smaller size (an empty user adds nothing) and is noted in
    ``info["fallback"]``.
    """
    out = {}
    ridge = options.get("ridge_lambda", 0.0)
    for n in sorted(sizes):
        if n == 1:
            out[n] = fit_single(view, ridge)
            continue
        try:
            out[n] = identify(view, n, algorithm, seed=seed, **options)
        except (DegenerateAccountError, InsufficientDataError) as exc:
            prev = out.get(n - 1)
            if prev is None:
                raise
            logger.info("account %s: size %d falls back to size %d (%s)", view.account, n, n - 1, exc)
            out[n] = IdentificationResult(
                n, prev.assignment, list(prev.profiles) + [prev.profiles[-1]], prev.mse,
                prev.algorithm, empty=tuple(range(n - 1, n)) + prev.empty,
                info={"fallback": str(exc)},
            )
    return out


def select_size(view: AccountView, sigma2: float, sizes: Sequence[int] = DEFAULT_SIZES,
                algorithm: str = "em", seed=None, fits: dict = None, **options) -> SelectionReport:
    """BIC-optimal household size of one account."""
    fits = fits if fits is not None else fit_sizes(view, sizes, algorithm, seed, **options)
    sizes = sorted(fits)
    per = tuple((n, fits[n].mse, bic_value(fits[n].mse, n, view.d, view.m, sigma2)) for n in sizes)
    gaps = tuple(normalized_gap(fits[a].mse, fits[b].mse, view.m) for a, b in zip(sizes, sizes[1:]))
    label = min(per, key=lambda t: (t[2], t[0]))[0]
    return SelectionReport(view.account, view.m, per, gaps, label, "bic")


class RocCurve(NamedTuple):
    thresholds: np.ndarray
    tpr: np.ndarray
    tnr: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.tpr.tolist(), self.tnr.tolist()))


def roc_curve(scores, is_composite) -> RocCurve:
    """ROC of the rule "composite when score > t" over every distinct score.

    TPR is the fraction of composites labelled composite and TNR the fraction
    of single accounts labelled single. Tied scores move together, so the
    trapezoidal AUC credits ties one half.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(is_composite, dtype=bool)
    if len(s) != len(y):
        raise ValueError("scores and labels differ in length")
    P, N = int(y.sum()), int((~y).sum())
    if P == 0 or N == 0:
        raise ValueError("ROC needs both composite and single accounts")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.r_[0, np.cumsum(y)[last]]
    fp = np.r_[0, np.cumsum(~y)[last]]
    tpr, fpr = tp / P, fp / N
    thresholds = np.r_[np.inf, s[last]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(thresholds, tpr, 1.0 - fpr, auc)


class GammaFit(NamedTuple):
    shape: float
    scale: float
    lo: float
    hi: float
    kept_fraction: float

    def pdf(self, x):
        return stats.gamma.pdf(x, self.shape, scale=self.scale)


def _truncated_moments(shape, scale, lo, hi):
    lo = max(lo, 0.0)
    G = stats.gamma
    mass = G.cdf(hi, shape, scale=scale) - G.cdf(lo, shape, scale=scale)
    if mass <= 0:
        return np.nan, np.nan
    # E[X 1{lo<X<hi}] = k s P_{k+1}(lo,hi); E[X^2 ...] = k (k+1) s^2 P_{k+2}
    m1 = shape * scale * (G.cdf(hi, shape + 1, scale=scale) - G.cdf(lo, shape + 1, scale=scale)) / mass
    m2 = shape * (shape + 1) * scale ** 2 * (
        G.cdf(hi, shape + 2, scale=scale) - G.cdf(lo, shape + 2, scale=scale)) / mass
    return m1, m2 - m1 * m1


def _fit_window(x, lo, hi):
    kept = x[(x >= lo) & (x <= hi)]
    km, kv = kept.mean(), kept.var()
    if not (len(kept) > 1 and km > 0 and kv > 0):
        raise FitError(f"gamma fit infeasible: trimmed mean {km:.4g}, variance {kv:.4g}")
    start = np.log([km * km / kv, kv / km])

    def eqs(p):
        m1, v1 = _truncated_moments(math.exp(p[0]), math.exp(p[1]), lo, hi)
        return [m1 / km - 1.0, v1 / kv - 1.0]

    sol = optimize.root(eqs, start, method="hybr")
    if sol.success and np.all(np.isfinite(sol.x)):
        shape, scale = np.exp(sol.x)
    else:
        logger.info("truncated gamma moments did not converge; using plain moments")
        shape, scale = np.exp(start)
    return GammaFit(float(shape), float(scale), float(lo), float(hi), len(kept) / len(x))


def fit_gamma_trimmed(x, trim_k: float = 1.5, recenter: int = 20) -> GammaFit:
    """Method-of-moments gamma fit to the sample within ``trim_k`` std of the mean.

    The moment equations are those of the gamma restricted to the kept
    window, so trimming the tail does not shrink the fitted spread. The
    first window comes from the sample mean and std; up to ``recenter``
    further passes move it to the fitted gamma's mean and std until the kept
    set stops changing, which keeps a heavy tail from widening the window.
    ``recenter=0`` is the single-pass fit.
    """
    x = np.asarray(x, dtype=float)
    mu, sd = x.mean(), x.std()
    fit = _fit_window(x, mu - trim_k * sd, mu + trim_k * sd)
    for _ in range(recenter):
        mu, sd = fit.shape * fit.scale, math.sqrt(fit.shape) * fit.scale
        lo, hi = mu - trim_k * sd, mu + trim_k * sd
        same = np.array_equal((x >= lo) & (x <= hi), (x >= fit.lo) & (x <= fit.hi))
        if same:
            break
        try:
            fit = _fit_window(x, lo, hi)
        except FitError:
            break
    return fit


def freedman_diaconis_width(x) -> float:
    q75, q25 = np.percentile(x, [75, 25])
    return 2.0 * (q75 - q25) * len(x) ** (-1.0 / 3.0)


class OutlierLabels(NamedTuple):
    threshold: float
    labels: np.ndarray
    fit: GammaFit
    edges: np.ndarray
    density: np.ndarray
    fitted_density: np.ndarray


def gamma_outlier_labels(gaps, trim_k: float = 1.5, ratio: float = 2.0,
                         min_accounts: int = 50) -> OutlierLabels:
    """Label accounts whose normalized gap lies in the heavy tail.

    A gamma is fit to the central part of the gap distribution and scaled to
    the mass it covers there. The threshold is the left edge of the first
    histogram bin from which every non-empty bin's empirical density is at
    least ``ratio`` times the fitted density; bin widths follow the
    Freedman-Diaconis rule on the trimmed sample.
    """
    g = np.asarray(gaps, dtype=float)
    if len(g) < min_accounts:
        raise InsufficientDataError(
            f"the outlier method is population-level: need >= {min_accounts} accounts, got {len(g)}"
        )
    fit = fit_gamma_trimmed(g, trim_k)
    kept = g[(g >= fit.lo) & (g <= fit.hi)]
    width = freedman_diaconis_width(kept)
    if not width > 0:
        width = (g.max() - g.min()) / max(int(math.sqrt(len(g))), 1) or 1.0
    start = min(g.min(), 0.0)
    nbins = int(math.ceil((g.max() - start) / width)) + 1
    edges = start + width * np.arange(nbins + 1)
    counts, _ = np.histogram(g, edges)
    density = counts / (len(g) * width)
    centers = (edges[:-1] + edges[1:]) / 2.0
    window_mass = stats.gamma.cdf(fit.hi, fit.shape, scale=fit.scale) - stats.gamma.cdf(
        max(fit.lo, 0.0), fit.shape, scale=fit.scale)
    fitted = fit.pdf(centers) * fit.kept_fraction / max(window_mass, 1e-300)
    exceeds = density >= ratio * fitted
    mode = centers[np.argmax(fitted)]
    ok = exceeds | (counts == 0)
    # first bin right of the fitted mode after which all non-empty bins exceed
    threshold = float(edges[-1])
    for b in range(nbins - 1, -1, -1):
        if not ok[b] or centers[b] <= mode:
            break
        if counts[b] > 0:
            threshold = float(edges[b])
    labels = g >= threshold
    return OutlierLabels(threshold, labels, fit, edges, density, fitted)


def two_pass_outlier_sizes(gap12, gap23, trim_k: float = 1.5, min_accounts: int = 50):
    """Sizes 1, 2 or 3 (meaning >= 3) by repeating the outlier rule on outliers.

    Returns ``(sizes, first_pass, second_pass_or_None)``; the second pass is
    skipped when fewer than ``min_accounts`` outliers remain.
    """
    gap12 = np.asarray(gap12, dtype=float)
    gap23 = np.asarray(gap23, dtype=float)
    first = gamma_outlier_labels(gap12, trim_k, min_accounts=min_accounts)
    sizes = np.where(first.labels, 2, 1)
    second = None
    out_idx = np.flatnonzero(first.labels)
    if len(out_idx) >= min_accounts:
        try:
            second = gamma_outlier_labels(gap23[out_idx], trim_k, min_accounts=min_accounts)
            sizes[out_idx[second.labels]] = 3
        except FitError as exc:
            logger.info("second outlier pass skipped: %s", exc)
    return sizes, first, second
