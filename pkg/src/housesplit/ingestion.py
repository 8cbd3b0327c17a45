"""Reading ratings and household files, merging households, null-model splits."""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

from .data_model import AccountView, RatingsDataset
from .errors import (
    DuplicatePairError,
    EmptyDatasetError,
    HouseholdSpecError,
    InputError,
    MalformedRowError,
    RatingScaleError,
)

logger = logging.getLogger(__name__)

RATINGS_HEADER = ("account", "movie", "rating")
HOUSEHOLDS_HEADER = ("household", "account")
TRUTH_HEADER = ("account", "movie", "user")


class HouseholdSpec(NamedTuple):
    household_id: str
    member_account_indices: tuple


class MergedHouseholds(NamedTuple):
    dataset: RatingsDataset
    truths: dict
    conflicts: list


def _read_rows(path, header):
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise EmptyDatasetError(f"{path}: empty file")
        if tuple(c.strip().lower() for c in first) != header:
            raise MalformedRowError(path, 1, f"expected header {','.join(header)}")
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRowError(path, line, f"expected {len(header)} fields, got {len(row)}")
            yield line, [c.strip() for c in row]


def parse_ratings(path, scale=(1.0, 5.0)) -> RatingsDataset:
    """Read an ``account,movie,rating`` CSV into a dataset.

    Ids are kept as opaque strings and indexed in order of first appearance.
    ``scale=None`` disables the bounds check.
    """
    accounts, movies = {}, {}
    a_idx, m_idx, vals = [], [], []
    lines = {}
    dups = []
    for line, (acc, mov, rating) in _read_rows(path, RATINGS_HEADER):
        try:
            r = float(rating)
        except ValueError:
            raise MalformedRowError(path, line, f"rating {rating!r} is not a number") from None
        if not np.isfinite(r):
            raise MalformedRowError(path, line, "non-finite rating")
        if scale is not None and not (scale[0] <= r <= scale[1]):
            raise RatingScaleError(f"{path}:{line}: rating {r} outside scale {tuple(scale)}")
        a = accounts.setdefault(acc, len(accounts))
        m = movies.setdefault(mov, len(movies))
        if (a, m) in lines:
            dups.append((acc, mov))
            continue
        lines[(a, m)] = line
        a_idx.append(a)
        m_idx.append(m)
        vals.append(r)
    if dups:
        raise DuplicatePairError(dups)
    if not vals:
        raise EmptyDatasetError(f"{path}: no ratings")
    return RatingsDataset(tuple(accounts), tuple(movies), a_idx, m_idx, vals, scale)


def write_ratings(path, ds: RatingsDataset):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RATINGS_HEADER)
        for a in range(ds.N):
            mi, r = ds.account_ratings(a)
            for m, val in zip(mi, r):
                w.writerow([ds.accounts[a], ds.movies[m], repr(float(val))])


def parse_households(path, ds: RatingsDataset) -> list:
    """Read a ``household,account`` CSV; members keep file order."""
    members = {}
    for line, (hh, acc) in _read_rows(path, HOUSEHOLDS_HEADER):
        try:
            a = ds.account_index(acc)
        except ValueError:
            raise MalformedRowError(path, line, f"unknown account {acc!r}") from None
        members.setdefault(hh, []).append(a)
    return [HouseholdSpec(h, tuple(m)) for h, m in members.items()]


def read_truth(path) -> dict:
    """Read an ``account,movie,user`` CSV into ``{account: {movie: user}}``."""
    out = {}
    for line, (acc, mov, user) in _read_rows(path, TRUTH_HEADER):
        try:
            out.setdefault(acc, {})[mov] = int(user)
        except ValueError:
            raise MalformedRowError(path, line, f"user label {user!r} is not an integer") from None
    return out


def write_truth(path, ds: RatingsDataset, truths: dict):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for acc, labels in truths.items():
            mi, _ = ds.account_ratings(ds.account_index(acc))
            for m, lab in zip(mi, labels):
                w.writerow([acc, ds.movies[m], int(lab)])


def merge_households(ds: RatingsDataset, specs: Sequence[HouseholdSpec],
                     conflict: str = "drop") -> MergedHouseholds:
    """Merge each household's member accounts into one composite account.

    The ground truth of a merged rating is the position of its rater in the
    household's member list. When several members rated the same movie,
    ``conflict="drop"`` keeps the first member's rating and ``"average"``
    stores the mean rating, attributed to the first member. Every conflict
    is returned as ``(household, movie, member_positions)``.

    Accounts outside every household are not part of the result.
    """
    if conflict not in ("drop", "average"):
        raise ValueError("conflict must be 'drop' or 'average'")
    seen = {}
    for s in specs:
        if not s.member_account_indices:
            raise HouseholdSpecError(f"household {s.household_id!r} has no members")
        for a in s.member_account_indices:
            if not 0 <= a < ds.N:
                raise HouseholdSpecError(f"household {s.household_id!r}: bad account index {a}")
            if a in seen:
                raise HouseholdSpecError(
                    f"account {ds.accounts[a]!r} in households {seen[a]!r} and {s.household_id!r}"
                )
            seen[a] = s.household_id
    if len({s.household_id for s in specs}) != len(specs):
        raise HouseholdSpecError("duplicate household ids")

    a_idx, m_idx, vals = [], [], []
    truths, conflicts = {}, []
    for h, s in enumerate(specs):
        by_movie = {}
        for pos, a in enumerate(s.member_account_indices):
            for m, r in zip(*ds.account_ratings(a)):
                by_movie.setdefault(int(m), []).append((pos, float(r)))
        movies = sorted(by_movie)
        labels = []
        for m in movies:
            entries = by_movie[m]
            if len(entries) > 1:
                conflicts.append((s.household_id, ds.movies[m], tuple(p for p, _ in entries)))
                r = entries[0][1] if conflict == "drop" else float(np.mean([e[1] for e in entries]))
            else:
                r = entries[0][1]
            a_idx.append(h)
            m_idx.append(m)
            vals.append(r)
            labels.append(entries[0][0])
        # members whose every movie was taken by an earlier member vanish; keep labels dense
        _, dense = np.unique(np.asarray(labels, dtype=np.int64), return_inverse=True)
        truths[s.household_id] = dense.astype(np.int64)
    if conflicts:
        logger.info("merge_households: %d shared-movie conflicts (%s mode)", len(conflicts), conflict)
    merged = RatingsDataset(
        tuple(s.household_id for s in specs), ds.movies, a_idx, m_idx, vals, ds.scale
    )
    return MergedHouseholds(merged, truths, conflicts)


RatioDistribution = Union[float, Sequence[float], Callable[[np.random.Generator], float], None]


def draw_ratio(ratio_distribution: RatioDistribution, rng: np.random.Generator) -> float:
    """Sample one share-of-movies ratio.

    A float is a fixed ratio, a sequence is resampled empirically, a callable
    is called with ``rng``, and ``None`` means Uniform(0.2, 0.8).
    """
    if ratio_distribution is None:
        return float(rng.uniform(0.2, 0.8))
    if callable(ratio_distribution):
        return float(ratio_distribution(rng))
    if np.ndim(ratio_distribution) == 0:
        return float(ratio_distribution)
    pool = np.asarray(ratio_distribution, dtype=float)
    return float(pool[rng.integers(len(pool))])


def null_split(view: AccountView, ratio_distribution: RatioDistribution = None,
               seed=None) -> AccountView:
    """Same ratings with a random two-user ground truth.

    The first fictitious user receives ``round(p * m)`` movies, clipped so
    both users are non-empty, with ``p`` drawn from ``ratio_distribution``.
    """
    if view.m < 2:
        raise InputError("null_split needs at least 2 movies")
    rng = np.random.default_rng(seed)
    p = draw_ratio(ratio_distribution, rng)
    k = int(np.clip(round(p * view.m), 1, view.m - 1))
    truth = np.ones(view.m, dtype=np.int64)
    truth[rng.permutation(view.m)[:k]] = 0
    return view.with_truth(truth)


def household_ratios(truths) -> np.ndarray:
    """Share of movies rated by the first member, per two-member household."""
    out = []
    for t in truths:
        t = np.asarray(t)
        if t.max() == 1:
            out.append(float(np.mean(t == 0)))
    return np.asarray(out)
