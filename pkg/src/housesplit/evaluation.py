"""Population-level diagnostics: null-model significance, CDFs, similarity vs gap."""
from __future__ import annotations

import math
from dataclasses import replace
from typing import NamedTuple, Sequence

import numpy as np

from .data_model import AccountView, IdentificationResult
from .errors import InputError, InsufficientDataError
from .identification import EmConfig, fit_oracle, fit_single, identify_em, similarity
from .ingestion import RatioDistribution, null_split
from .io import write_csv

MIN_NULL_RUNS = 100


def null_similarities(views: Sequence[AccountView], em_cfg: EmConfig = EmConfig(),
                      ratio_distribution: RatioDistribution = None, seed=None,
                      n_runs: int = None) -> np.ndarray:
    """Similarity of two-user EM to a random split of a view's movies.

    Run ``k`` uses ``views[k % len(views)]`` (``n_runs`` defaults to one run
    per view). Every run shares ``em_cfg`` except the seed, which is derived
    per run from ``seed`` so runs are independent and reproducible.
    """
    if not views:
        raise InputError("null_similarities needs at least one view")
    n_runs = len(views) if n_runs is None else n_runs
    children = np.random.SeedSequence(seed).spawn(n_runs)
    out = np.empty(n_runs)
    for k, child in enumerate(children):
        view = views[k % len(views)]
        split_seed, em_seed = (int(x) for x in child.generate_state(2))
        fake = null_split(view, ratio_distribution, split_seed)
        res = identify_em(fake, 2, replace(em_cfg, seed=em_seed))
        out[k] = similarity(res.assignment, fake.ground_truth)
    return out


def significance_threshold(null_sims, alpha: float = 0.05, min_runs: int = MIN_NULL_RUNS) -> float:
    """Empirical ``1 - alpha`` quantile of the null similarities."""
    s = np.asarray(null_sims, dtype=float)
    if len(s) < min_runs:
        raise InsufficientDataError(f"need >= {min_runs} null runs, got {len(s)}")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return float(np.quantile(s, 1.0 - alpha))


def p_value(s: float, null_sims) -> float:
    """Fraction of null similarities at least ``s``."""
    return float(np.mean(np.asarray(null_sims) >= s))


class GapDiagnostic(NamedTuple):
    similarity: float
    rmse_gap: float


def rmse_gap_diagnostic(view: AccountView, em_result: IdentificationResult,
                        ridge_lambda: float = 0.0) -> GapDiagnostic:
    """``(s(I, I*), RMSE_1 - RMSE_*)`` with ``RMSE_*`` fit on the true assignment."""
    if view.ground_truth is None:
        raise InputError("rmse_gap_diagnostic needs ground truth")
    single = fit_single(view, ridge_lambda)
    oracle = fit_oracle(view, ridge_lambda)
    return GapDiagnostic(similarity(em_result.assignment, view.ground_truth),
                         math.sqrt(single.mse) - math.sqrt(oracle.mse))


def cdf_export(values, label: str = "") -> list:
    """Empirical CDF as sorted ``(value, fraction <= value)`` pairs, one per distinct value."""
    x = np.asarray(values, dtype=float).ravel()
    if len(x) == 0:
        raise InputError(f"cdf_export{' (' + label + ')' if label else ''}: no values")
    u, counts = np.unique(x, return_counts=True)
    return list(zip(u.tolist(), (np.cumsum(counts) / len(x)).tolist()))


def write_cdfs(path, series: dict):
    """``cdf_similarity.csv`` style table: ``label,value,fraction``."""
    rows = []
    for label in sorted(series):
        rows.extend((label, v, f) for v, f in cdf_export(series[label], label))
    write_csv(path, ("label", "value", "fraction"), rows)


def write_roc(path, curves: dict):
    """``roc.csv``: ``method,threshold,tpr,tnr``; the first row of each method has threshold inf."""
    rows = []
    for method in sorted(curves):
        c = curves[method]
        rows.extend((method, t, tp, tn) for t, tp, tn in zip(c.thresholds, c.tpr, c.tnr))
    write_csv(path, ("method", "threshold", "tpr", "tnr"), rows)


def write_gap_hist(path, outlier):
    """``gap_hist.csv`` from a :class:`OutlierLabels` result."""
    e = outlier.edges
    rows = [(e[b], e[b + 1], outlier.density[b], outlier.fitted_density[b])
            for b in range(len(e) - 1)]
    write_csv(path, ("bin_left", "bin_right", "density", "fitted_density"), rows)


def write_scatter(path, accounts, diagnostics):
    rows = [(a, g.similarity, g.rmse_gap) for a, g in zip(accounts, diagnostics)]
    write_csv(path, ("account", "similarity", "rmse_gap"), rows)
