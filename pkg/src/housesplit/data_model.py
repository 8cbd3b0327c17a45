"""Core domain types: ratings tables, movie features, account views, profiles.

A rating event ``(v_j, r_j)`` of an account is lifted to the point
``x_j = (v_j, 1, r_j)``. A user with profile ``(u, z)`` rates along the
hyperplane whose normal is ``(u, z, -1)``; the residual of a rating under a
profile is always ``r - <u, v> - z``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DatasetMismatchError,
    DuplicatePairError,
    EmptyAccountError,
    EmptyDatasetError,
    RatingScaleError,
)

ALGORITHMS = ("kmeans", "spectral", "em", "gpca", "oracle", "regression")


def _frozen(a, dtype=None):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RatingsDataset:
    """Sparse account x movie ratings with dense index maps.

    ``scale`` is ``(low, high)`` or ``None`` for unbounded ratings.
    """

    accounts: tuple
    movies: tuple
    account_idx: np.ndarray
    movie_idx: np.ndarray
    ratings: np.ndarray
    scale: Optional[tuple] = (1.0, 5.0)
    _rows: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "accounts", tuple(str(a) for a in self.accounts))
        object.__setattr__(self, "movies", tuple(str(m) for m in self.movies))
        a = _frozen(self.account_idx, np.int64)
        m = _frozen(self.movie_idx, np.int64)
        r = _frozen(self.ratings, np.float64)
        object.__setattr__(self, "account_idx", a)
        object.__setattr__(self, "movie_idx", m)
        object.__setattr__(self, "ratings", r)
        if not (len(a) == len(m) == len(r)):
            raise DatasetMismatchError("rating columns have different lengths")
        if len(r) == 0:
            raise EmptyDatasetError("dataset has no ratings")
        if a.min() < 0 or a.max() >= self.N or m.min() < 0 or m.max() >= self.M:
            raise DatasetMismatchError("rating indices outside [0, N) x [0, M)")
        if not np.all(np.isfinite(r)):
            raise RatingScaleError("non-finite rating")
        if self.scale is not None:
            lo, hi = float(self.scale[0]), float(self.scale[1])
            object.__setattr__(self, "scale", (lo, hi))
            bad = np.flatnonzero((r < lo) | (r > hi))
            if len(bad):
                raise RatingScaleError(
                    f"{len(bad)} ratings outside scale [{lo}, {hi}], first at row {bad[0]}"
                )
        key = a * self.M + m
        uniq, counts = np.unique(key, return_counts=True)
        if len(uniq) != len(key):
            dup = uniq[counts > 1]
            raise DuplicatePairError(
                (self.accounts[k // self.M], self.movies[k % self.M]) for k in dup
            )
        order = np.lexsort((m, a))
        bounds = np.searchsorted(a[order], np.arange(self.N + 1))
        object.__setattr__(self, "_rows", {"order": order, "bounds": bounds})

    @property
    def N(self) -> int:
        return len(self.accounts)

    @property
    def M(self) -> int:
        return len(self.movies)

    def __len__(self):
        return len(self.ratings)

    def account_ratings(self, account: int):
        """Movie indices (ascending) and ratings of one account."""
        b = self._rows["bounds"]
        rows = self._rows["order"][b[account]:b[account + 1]]
        return self.movie_idx[rows], self.ratings[rows]

    def account_index(self, account_id: str) -> int:
        return self.accounts.index(str(account_id))

    def movie_counts(self) -> np.ndarray:
        return np.bincount(self.movie_idx, minlength=self.M)


@dataclass(frozen=True, eq=False)
class MovieFeatures:
    """Learned feature vector ``v_j`` per movie plus the global noise variance."""

    vectors: np.ndarray
    sigma2: float
    movies: tuple = ()
    cold: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = _frozen(self.vectors, np.float64)
        if v.ndim != 2 or v.shape[1] < 1:
            raise DatasetMismatchError("feature matrix must be M x d with d >= 1")
        if not np.all(np.isfinite(v)):
            raise DatasetMismatchError("non-finite movie feature")
        if not self.sigma2 >= 0:
            raise DatasetMismatchError("sigma2 must be >= 0")
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "movies", tuple(str(m) for m in self.movies))
        cold = np.zeros(len(v), bool) if self.cold is None else self.cold
        object.__setattr__(self, "cold", _frozen(cold, bool))

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def M(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True, eq=False)
class AccountView:
    """One account's rating events, their lifts, and optional ground truth."""

    movie_indices: np.ndarray
    ratings: np.ndarray
    features: np.ndarray
    ground_truth: Optional[np.ndarray] = None
    account: str = ""

    def __post_init__(self):
        mi = _frozen(self.movie_indices, np.int64)
        r = _frozen(self.ratings, np.float64)
        V = _frozen(self.features, np.float64)
        if len(mi) == 0:
            raise EmptyAccountError(f"account {self.account!r} has no ratings")
        if not (len(mi) == len(r) == len(V)):
            raise DatasetMismatchError("movie, rating and feature lists differ in length")
        object.__setattr__(self, "movie_indices", mi)
        object.__setattr__(self, "ratings", r)
        object.__setattr__(self, "features", V)
        if self.ground_truth is not None:
            gt = _frozen(self.ground_truth, np.int64)
            if len(gt) != len(mi):
                raise DatasetMismatchError("ground truth length differs from m")
            if gt.min() < 0 or set(np.unique(gt)) != set(range(gt.max() + 1)):
                raise DatasetMismatchError("ground truth labels must cover 0..n*-1")
            object.__setattr__(self, "ground_truth", gt)

    @property
    def m(self) -> int:
        return len(self.ratings)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def lifted(self) -> np.ndarray:
        """The points ``x_j = (v_j, 1, r_j)``, shape (m, d + 2)."""
        return np.column_stack([self.features, np.ones(self.m), self.ratings])

    @property
    def design(self) -> np.ndarray:
        """Regression design ``[v_j, 1]``, shape (m, d + 1)."""
        return np.column_stack([self.features, np.ones(self.m)])

    @property
    def n_true(self) -> Optional[int]:
        if self.ground_truth is None:
            return None
        return int(self.ground_truth.max()) + 1

    def subset(self, positions) -> "AccountView":
        positions = np.asarray(positions, dtype=np.int64)
        gt = None
        if self.ground_truth is not None:
            gt = self.ground_truth[positions]
            # keep labels dense after subsetting
            _, gt = np.unique(gt, return_inverse=True)
        return AccountView(
            self.movie_indices[positions],
            self.ratings[positions],
            self.features[positions],
            gt,
            self.account,
        )

    def with_truth(self, truth) -> "AccountView":
        return AccountView(self.movie_indices, self.ratings, self.features, truth, self.account)


@dataclass(frozen=True)
class UserProfile:
    u: np.ndarray
    z: float

    def __post_init__(self):
        u = _frozen(np.ravel(self.u), np.float64)
        if not (np.all(np.isfinite(u)) and math.isfinite(self.z)):
            raise ValueError("profile must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "z", float(self.z))

    @property
    def theta(self) -> np.ndarray:
        return np.append(self.u, self.z)

    @property
    def normal(self) -> np.ndarray:
        return np.concatenate([self.u, [self.z, -1.0]])

    @classmethod
    def from_theta(cls, theta) -> "UserProfile":
        theta = np.asarray(theta, dtype=np.float64)
        return cls(theta[:-1], float(theta[-1]))

    def predict(self, V) -> np.ndarray:
        return np.asarray(V) @ self.u + self.z


@dataclass(frozen=True, eq=False)
class IdentificationResult:
    n: int
    assignment: np.ndarray
    profiles: tuple
    mse: float
    algorithm: str
    empty: tuple = ()
    flagged: np.ndarray = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        a = _frozen(self.assignment, np.int64)
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "profiles", tuple(self.profiles))
        if len(self.profiles) != self.n:
            raise ValueError("need exactly n profiles")
        if len(a) and (a.min() < 0 or a.max() >= self.n):
            raise ValueError("assignment label outside [0, n)")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm tag {self.algorithm!r}")
        if not self.mse >= 0:
            raise ValueError("mse must be >= 0")
        missing = tuple(sorted(set(range(self.n)) - set(np.unique(a).tolist())))
        if missing and not set(missing) <= set(self.empty):
            raise ValueError(f"labels {missing} unused but not flagged empty")
        flagged = np.zeros(len(a), bool) if self.flagged is None else self.flagged
        object.__setattr__(self, "flagged", _frozen(flagged, bool))

    @property
    def theta(self) -> np.ndarray:
        return np.array([p.theta for p in self.profiles])

    def check(self, view: AccountView, rtol: float = 1e-9) -> bool:
        """Stored mse agrees with recomputation from (assignment, profiles)."""
        again = mse_of(view, self.assignment, self.profiles)
        return math.isclose(again, self.mse, rel_tol=rtol, abs_tol=1e-300)


@dataclass(frozen=True, eq=False)
class SelectionReport:
    """Per-size fit quality and the selected household size of one account."""

    account: str
    m: int
    per_size: tuple
    normalized_gaps: tuple
    label: int
    method: str

    def __post_init__(self):
        for n, mse_n, bic_n in self.per_size:
            if not (mse_n >= 0 and math.isfinite(bic_n)):
                raise ValueError(f"invalid entry for size {n}: mse={mse_n}, bic={bic_n}")

    def mse(self, n: int) -> float:
        return dict((k, v) for k, v, _ in self.per_size)[n]

    def bic(self, n: int) -> float:
        return dict((k, b) for k, _, b in self.per_size)[n]


def lift(features: MovieFeatures, movie_indices: Sequence[int], ratings: Sequence[float],
         ground_truth=None, account: str = "") -> AccountView:
    """Build an account view whose lifted points are ``(v_j, 1, r_j)``."""
    mi = np.asarray(movie_indices, dtype=np.int64)
    r = np.asarray(ratings, dtype=np.float64)
    if len(mi) == 0:
        raise EmptyAccountError(f"account {account!r} has no ratings")
    if len(mi) != len(r):
        raise DatasetMismatchError("movie_indices and ratings differ in length")
    if mi.min() < 0 or mi.max() >= features.M:
        raise DatasetMismatchError(
            f"movie index out of range for features with M={features.M}"
        )
    if not np.all(np.isfinite(r)):
        raise DatasetMismatchError("non-finite rating")
    return AccountView(mi, r, features.vectors[mi], ground_truth, account)


def residual(profile: UserProfile, v, r: float) -> float:
    """``r - <u, v> - z``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != profile.u.shape:
        raise DatasetMismatchError(
            f"feature dimension {v.shape} does not match profile {profile.u.shape}"
        )
    return float(r - v @ profile.u - profile.z)


def residuals(view: AccountView, assignment, profiles) -> np.ndarray:
    """Residual of every rating under the profile of its assigned user."""
    assignment = np.asarray(assignment, dtype=np.int64)
    if len(assignment) != view.m:
        raise DatasetMismatchError("assignment must cover all m movies")
    if assignment.min() < 0 or assignment.max() >= len(profiles):
        raise ValueError("assignment label >= n")
    theta = np.array([p.theta for p in profiles])
    pred = np.einsum("ij,ij->i", view.design, theta[assignment])
    return view.ratings - pred


def mse_of(view: AccountView, assignment, profiles) -> float:
    res = residuals(view, assignment, profiles)
    return float(res @ res / view.m)


def mse(view: AccountView, result: IdentificationResult) -> float:
    return mse_of(view, result.assignment, result.profiles)


def log_likelihood(view: AccountView, assignment, profiles, sigma2: float) -> float:
    """Gaussian log-likelihood up to the additive normalizing constant."""
    res = residuals(view, assignment, profiles)
    return float(-(res @ res) / (2.0 * sigma2))
