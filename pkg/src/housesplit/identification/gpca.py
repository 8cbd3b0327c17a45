"""Algebraic subspace clustering of the lifted points (generalized PCA).

The ``n`` hyperplanes of an arrangement are the zero set of one homogeneous
polynomial of degree ``n`` (the product of the linear forms). Its
coefficients span the null space of the Veronese-embedded data, and its
gradient at a point is normal to that point's hyperplane.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from ..data_model import AccountView, IdentificationResult, UserProfile, mse_of
from ..errors import InsufficientDataError, SingularFitError
from ..kernels import veronese, veronese_gradient
from .regression import solve_profiles


def veronese_dim(n: int, d: int) -> int:
    """Number of degree-``n`` monomials in ``d + 2`` variables."""
    return math.comb(n + d + 1, n)


@lru_cache(maxsize=64)
def monomial_exponents(n: int, D: int) -> np.ndarray:
    """Exponent vectors of all degree-``n`` monomials in ``D`` variables, shape (K, D)."""
    rows = []
    for combo in itertools.combinations_with_replacement(range(D), n):
        e = np.zeros(D, dtype=np.int64)
        for l in combo:
            e[l] += 1
        rows.append(e)
    out = np.array(rows, dtype=np.int64).reshape(-1, D)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GpcaConfig:
    angle_tolerance: float = 0.1
    seed: Optional[int] = None
    ridge_lambda: float = 0.0
    # reweighting passes of the first-order (Sampson) distance; 0 = plain null vector
    refine_iters: int = 2
    grad_eps: float = 1e-8


def polynomial_coefficients(Y: np.ndarray, exps: np.ndarray, weights=None) -> np.ndarray:
    """Unit-norm ``c`` minimizing ``||diag(w) Nu c||``: the last right singular vector."""
    E = veronese(Y, exps)
    if weights is not None:
        E = E * weights[:, None]
    _, _, vt = np.linalg.svd(E, full_matrices=False)
    return vt[-1]


def fit_polynomial(Y: np.ndarray, n: int, refine_iters: int = 0, grad_eps: float = 1e-8):
    """Vanishing polynomial of degree ``n`` for the rows of ``Y``.

    With ``refine_iters > 0`` the fit is repeated with each row weighted by
    the inverse gradient norm, the first-order approximation of the
    distance of a point to the zero set.
    """
    exps = monomial_exponents(n, Y.shape[1])
    c = polynomial_coefficients(Y, exps)
    for _ in range(refine_iters):
        g = np.linalg.norm(veronese_gradient(Y, exps, c), axis=1)
        floor = max(grad_eps, 1e-3 * float(np.median(g)))
        c = polynomial_coefficients(Y, exps, 1.0 / np.maximum(g, floor))
    return c, exps


def relative_residuals(Y, c, exps) -> np.ndarray:
    """``|P_c(y)| / (||c|| ||nu(y)||)`` per row."""
    E = veronese(Y, exps)
    return np.abs(E @ c) / (np.linalg.norm(c) * np.linalg.norm(E, axis=1))


def vote_normals(G: np.ndarray, n: int, angle_tolerance: float = 0.1):
    """Pick ``n`` dominant directions among unit gradients, treating ``g ~ -g``.

    Each remaining gradient votes for every remaining gradient within
    ``angle_tolerance``; the most-voted one and its agreeing neighbours form a
    group whose principal direction becomes a normal; the group is removed
    and voting repeats. Returns ``(normals, votes)``.
    """
    agree = np.abs(G @ G.T) >= math.cos(angle_tolerance)
    remaining = np.ones(len(G), bool)
    normals, votes = [], []
    while len(normals) < n and remaining.any():
        counts = agree[:, remaining].sum(axis=1)
        counts[~remaining] = -1
        lead = int(np.argmax(counts))
        members = remaining & agree[lead]
        _, _, vt = np.linalg.svd(G[members], full_matrices=False)
        normals.append(vt[0])
        votes.append(int(members.sum()))
        remaining &= ~members
    while len(normals) < n:
        # fewer distinct directions than users: reuse the least explained gradient
        N = np.array(normals)
        worst = int(np.argmin(np.max(np.abs(G @ N.T), axis=1)))
        normals.append(G[worst])
        votes.append(0)
    return np.array(normals), votes


def _profile_from_normal(nv, d):
    if abs(nv[-1]) < 1e-12:
        return UserProfile(np.zeros(d), 0.0)
    nv = nv / -nv[-1]
    return UserProfile(nv[:d], nv[d])


def identify_gpca(view: AccountView, n: int, cfg: GpcaConfig = GpcaConfig()) -> IdentificationResult:
    """Fit the vanishing polynomial, vote on gradient directions, assign, refit.

    Points are scaled to unit norm before embedding (the zero set is a cone,
    so this changes neither membership nor gradient directions). Movies go
    to the hyperplane at the smallest perpendicular distance; gradients
    below ``grad_eps`` times the largest are flagged and left out of voting.
    """
    X = view.lifted
    K = veronese_dim(n, view.d)
    if view.m < K:
        raise InsufficientDataError(
            f"GPCA with n={n}, d={view.d} needs m >= K = {K} movies, got {view.m}"
        )
    Y = X / np.linalg.norm(X, axis=1, keepdims=True)
    c, exps = fit_polynomial(Y, n, cfg.refine_iters, cfg.grad_eps)
    grad = veronese_gradient(Y, exps, c)
    gnorm = np.linalg.norm(grad, axis=1)
    flagged = gnorm <= cfg.grad_eps * max(gnorm.max(), 1e-300)
    G = grad[~flagged] / gnorm[~flagged, None]
    if len(G) == 0:
        G = np.eye(X.shape[1])[-1:]
    normals, votes = vote_normals(G, n, cfg.angle_tolerance)

    dist = np.abs(X @ normals.T)
    labels = np.argmin(dist, axis=1).astype(np.int64)

    # per-class ridge refit; a class that is empty or underdetermined keeps
    # the profile read off its normal
    profiles = [_profile_from_normal(nv, view.d) for nv in normals]
    design = view.design
    for i in range(n):
        rows = np.flatnonzero(labels == i)
        if len(rows) == 0:
            continue
        try:
            theta = solve_profiles(design[rows], view.ratings[rows],
                                   np.zeros(len(rows), dtype=np.int64), 1, cfg.ridge_lambda)
        except SingularFitError:
            continue
        profiles[i] = UserProfile.from_theta(theta[0])
    empty = tuple(int(i) for i in np.flatnonzero(np.bincount(labels, minlength=n) == 0))
    return IdentificationResult(
        n, labels, profiles, mse_of(view, labels, profiles), "gpca", empty=empty,
        flagged=flagged,
        info={"coefficients": c, "normals": normals, "votes": votes, "K": K,
              "max_relative_residual": float(relative_residuals(Y, c, exps).max())},
    )
