"""Identification by clustering rating events ``(v_j, r_j)``, then regression."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist, squareform
from sklearn.cluster import KMeans

from ..data_model import AccountView, IdentificationResult, mse_of
from ..errors import DegenerateAccountError, InsufficientDataError
from .regression import fit_profiles


def standardized_events(view: AccountView) -> np.ndarray:
    """Per-coordinate standardized ``(v_j, r_j)``; constant coordinates map to 0."""
    Z = np.column_stack([view.features, view.ratings])
    if np.all(Z == Z[0]):
        raise DegenerateAccountError(f"account {view.account!r}: all rating events identical")
    sd = Z.std(axis=0)
    sd[sd == 0] = 1.0
    return (Z - Z.mean(axis=0)) / sd


def _kmeans(Z, n, seed, n_init=10):
    return KMeans(n_clusters=n, n_init=n_init, random_state=seed).fit_predict(Z).astype(np.int64)


def _result(view, labels, n, ridge_lambda, tag):
    profiles = fit_profiles(view, labels, n, ridge_lambda)
    return IdentificationResult(n, labels, profiles, mse_of(view, labels, profiles), tag)


def identify_kmeans(view: AccountView, n: int, seed=None, ridge_lambda: float = 0.0,
                    n_init: int = 10) -> IdentificationResult:
    if view.m < n:
        raise InsufficientDataError(f"need m >= n, got m={view.m}, n={n}")
    Z = standardized_events(view)
    labels = np.zeros(view.m, dtype=np.int64) if n == 1 else _kmeans(Z, n, seed, n_init)
    return _result(view, labels, n, ridge_lambda, "kmeans")


@dataclass(frozen=True)
class SpectralConfig:
    seed: Optional[int] = None
    ridge_lambda: float = 0.0
    n_init: int = 10


def spectral_embedding(Z: np.ndarray, n: int) -> np.ndarray:
    """Row-normalized bottom eigenvectors of the symmetric normalized Laplacian.

    Affinities are Gaussian with bandwidth equal to the median pairwise distance.
    """
    dist = pdist(Z)
    h = np.median(dist)
    if h == 0:
        h = dist.max() if dist.max() > 0 else 1.0
    W = squareform(np.exp(-(dist ** 2) / (2.0 * h * h)))
    deg = W.sum(axis=1)
    deg[deg == 0] = 1.0
    inv_sqrt = 1.0 / np.sqrt(deg)
    L = np.eye(len(Z)) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    _, vecs = np.linalg.eigh(L)
    E = vecs[:, :n]
    norms = np.linalg.norm(E, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return E / norms


def identify_spectral(view: AccountView, n: int, cfg: SpectralConfig = SpectralConfig()) -> IdentificationResult:
    if view.m < n:
        raise InsufficientDataError(f"need m >= n, got m={view.m}, n={n}")
    Z = standardized_events(view)
    if n == 1:
        labels = np.zeros(view.m, dtype=np.int64)
    else:
        labels = _kmeans(spectral_embedding(Z, n), n, cfg.seed, cfg.n_init)
    return _result(view, labels, n, cfg.ridge_lambda, "spectral")
