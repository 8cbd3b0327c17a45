"""Hard (Viterbi) expectation-maximization over hyperplane arrangements."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..data_model import AccountView, IdentificationResult, UserProfile, mse_of
from ..errors import DegenerateAccountError, EmptyClassError, SingularFitError
from ..kernels import assign_min_residual
from .regression import solve_profiles

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmConfig:
    restarts: int = 5
    max_iters: int = 100
    ridge_lambda: float = 0.0
    seed: Optional[int] = None
    tol: float = 1e-10
    max_reseeds: int = 10

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")


@dataclass
class EmRun:
    labels: np.ndarray
    theta: np.ndarray
    mse: float
    objective: float
    # alternating trace: [after M-step 1, after E-step 1, after M-step 2, ...]
    mse_trace: list
    objective_trace: list
    iters: int
    converged: bool


def _penalty(theta, lam, m):
    if lam == 0.0:
        return 0.0
    return lam * float(np.sum(theta[:, :-1] ** 2)) / m


def em_run(X, r, labels, n, ridge_lambda=0.0, max_iters=100, tol=1e-10) -> EmRun:
    """One hard-EM descent from the initial assignment ``labels``.

    Raises ``EmptyClassError`` or ``SingularFitError`` when a class dies.
    """
    m = len(r)
    labels = np.asarray(labels, dtype=np.int64)
    mse_trace, obj_trace = [], []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        theta = solve_profiles(X, r, labels, n, ridge_lambda)
        res = r - np.einsum("ij,ij->i", X, theta[labels])
        m_mse = float(res @ res / m)
        pen = _penalty(theta, ridge_lambda, m)
        new_labels, sq = assign_min_residual(X, r, theta)
        e_mse = float(np.mean(sq))
        mse_trace += [m_mse, e_mse]
        obj_trace += [m_mse + pen, e_mse + pen]
        if np.array_equal(new_labels, labels):
            converged = True
            break
        counts = np.bincount(new_labels, minlength=n)
        if np.any(counts == 0):
            raise EmptyClassError(np.flatnonzero(counts == 0).tolist())
        labels = new_labels
        if len(obj_trace) > 2 and obj_trace[-3] - obj_trace[-1] <= tol * obj_trace[-3]:
            converged = True
            break
    return EmRun(new_labels, theta, e_mse, obj_trace[-1], mse_trace, obj_trace, it, converged)


def _min_class(run, n):
    return int(np.bincount(run.labels, minlength=n).min())


def identify_em(view: AccountView, n: int, cfg: EmConfig = EmConfig()) -> IdentificationResult:
    """Best of ``cfg.restarts`` hard-EM runs from uniformly random assignments.

    A run whose class empties (or becomes underdetermined) is restarted from
    a fresh random assignment, at most ``cfg.max_reseeds`` times. Restarts
    whose mse agree to round-off count as tied and the one with the larger
    smallest class wins, so exact fits do not crown a near-empty class.
    """
    m, d = view.m, view.d
    if m < n * (d + 1):
        warnings.warn(f"m={m} < n(d+1)={n * (d + 1)}: EM classes are likely underdetermined",
                      stacklevel=2)
    X, r = view.design, view.ratings
    best: Optional[EmRun] = None
    # mse differences below round-off are ties, settled by the larger smallest class
    tie_tol = 1e-12 * max(float(r @ r) / max(m, 1), 1e-300)
    runs = []
    failures = 0
    for child in np.random.SeedSequence(cfg.seed).spawn(cfg.restarts):
        rng = np.random.default_rng(child)
        run = None
        for _ in range(cfg.max_reseeds + 1):
            init = np.zeros(m, dtype=np.int64) if n == 1 else rng.integers(n, size=m)
            try:
                run = em_run(X, r, init, n, cfg.ridge_lambda, cfg.max_iters, cfg.tol)
                break
            except (EmptyClassError, SingularFitError) as exc:
                failures += 1
                logger.debug("EM run re-seeded: %s", exc)
        if run is None:
            continue
        runs.append(run.mse)
        if best is None or run.mse < best.mse - tie_tol or (
                abs(run.mse - best.mse) <= tie_tol and _min_class(run, n) > _min_class(best, n)):
            best = run
        if n == 1:
            break
    if best is None:
        raise DegenerateAccountError(
            f"account {view.account!r}: every EM restart for n={n} hit an empty class"
        )
    profiles = [UserProfile.from_theta(t) for t in best.theta]
    return IdentificationResult(
        n, best.labels, profiles, mse_of(view, best.labels, profiles), "em",
        info={"mse_trace": best.mse_trace, "objective_trace": best.objective_trace,
              "iters": best.iters, "converged": best.converged, "restart_mse": runs,
              "reseeds": failures},
    )
