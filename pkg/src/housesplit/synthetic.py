"""Synthetic accounts and populations with known subspace structure."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .data_model import AccountView, MovieFeatures, RatingsDataset, UserProfile
from .errors import InputError
from .ingestion import HouseholdSpec, RatioDistribution, draw_ratio


def normal_angle(p: UserProfile, q: UserProfile) -> float:
    """Unsigned angle in radians between the hyperplanes of two profiles."""
    a, b = p.normal, q.normal
    c = abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(min(c, 1.0)))


def generate_profiles(n: int, d: int, rng: np.random.Generator, separation: float = 0.0,
                      mode: str = "separated", profile_scale: float = 1.0,
                      bias_mean: float = 0.0, bias_sd: float = 1.0,
                      max_tries: int = 20000) -> list:
    """Draw ``n`` user profiles ``u ~ N(0, s^2 I)``, ``z ~ N(mu, sd^2)``.

    Modes
    -----
    separated
        Rejection sampling until every pair of normals is at least
        ``separation`` radians apart.
    orthogonal
        Mutually orthogonal normals (requires ``n <= d + 2``).
    identical
        ``n`` copies of one profile.
    exact
        Two profiles whose normals are exactly ``separation`` apart.
    """

    def draw():
        return UserProfile(rng.normal(0.0, profile_scale, d), rng.normal(bias_mean, bias_sd))

    if mode == "identical":
        p = draw()
        return [p] * n
    if mode == "orthogonal":
        if n > d + 2:
            raise InputError(f"cannot build {n} orthogonal normals in dimension {d + 2}")
        out = []
        for _ in range(n):
            w = draw().theta
            if out:
                W = np.array([p.theta for p in out])
                # (u_k, z_k).(u_i, z_i) = -1 makes (u, z, -1) normals orthogonal
                w = w + W.T @ np.linalg.solve(W @ W.T, -1.0 - W @ w)
            out.append(UserProfile.from_theta(w))
        return out
    if mode == "exact":
        if n != 2:
            raise InputError("exact-angle mode supports n = 2 only")
        if not 0.0 <= separation <= math.pi / 2:
            raise InputError("exact separation must lie in [0, pi/2]")
        p, q = generate_profiles(2, d, rng, mode="orthogonal", profile_scale=profile_scale,
                                 bias_mean=bias_mean, bias_sd=bias_sd)
        if separation == 0.0:
            return [p, p]
        a, b = p.normal, q.normal
        # blend keeps the last component at -1; angle to a grows monotonically in t
        if separation >= math.pi / 2:
            return [p, q]
        ratio = math.tan(separation) * np.linalg.norm(a) / np.linalg.norm(b)
        t = ratio / (1.0 + ratio)
        return [p, UserProfile.from_theta((1 - t) * p.theta + t * q.theta)]
    if mode != "separated":
        raise ValueError(f"unknown profile mode {mode!r}")
    out = []
    tries = 0
    while len(out) < n:
        cand = draw()
        tries += 1
        if all(normal_angle(cand, p) >= separation for p in out):
            out.append(cand)
        elif tries > max_tries:
            raise InputError(
                f"separation {math.degrees(separation):.1f} deg infeasible for n={n}, d={d}"
            )
    return out


@dataclass
class SyntheticConfig:
    """One synthetic account: ``n`` users sharing ``m`` movies.

    ``profile_separation`` is in radians. ``ratio_distribution`` controls
    the first user's share of movies when ``n == 2``; for larger ``n`` the
    shares are Dirichlet(1, ..., 1) with at least one movie each.
    """

    n_users_per_account: int = 2
    d: int = 5
    movies_per_account: int = 500
    noise_sigma: float = 0.1
    profile_separation: float = math.radians(60)
    ratio_distribution: RatioDistribution = None
    clip_to_scale: bool = False
    scale: tuple = (1.0, 5.0)
    profile_mode: str = "separated"
    profile_scale: float = 1.0
    bias_mean: float = 0.0
    bias_sd: float = 1.0
    seed: Optional[int] = None

    def __post_init__(self):
        if self.n_users_per_account < 1:
            raise InputError("need at least one user per account")
        if self.noise_sigma < 0:
            raise InputError("noise_sigma must be >= 0")
        if self.movies_per_account < self.n_users_per_account:
            raise InputError("need at least one movie per user")
        if self.d < 1:
            raise InputError("d must be >= 1")


class SyntheticAccount(NamedTuple):
    features: MovieFeatures
    view: AccountView
    profiles: list
    clip_rate: float
    noise: np.ndarray


def _split_sizes(n, m, ratio_distribution, rng):
    if n == 1:
        return [m]
    if n == 2:
        p = draw_ratio(ratio_distribution, rng)
        k = int(np.clip(round(p * m), 1, m - 1))
        return [k, m - k]
    shares = rng.dirichlet(np.ones(n))
    sizes = np.maximum(1, np.floor(shares * (m - n)).astype(int) + 1)
    sizes[np.argmax(sizes)] += m - sizes.sum()
    return sizes.tolist()


def generate_synthetic(cfg: SyntheticConfig) -> SyntheticAccount:
    """Draw movie features, user profiles and a labelled composite account.

    Features are i.i.d. standard normal; each rating follows the linear model
    of its user plus Gaussian noise of standard deviation ``noise_sigma``.
    Movie ``j`` of the account is movie ``j`` of the returned features.
    """
    rng = np.random.default_rng(cfg.seed)
    n, d, m = cfg.n_users_per_account, cfg.d, cfg.movies_per_account
    profiles = generate_profiles(
        n, d, rng, cfg.profile_separation, cfg.profile_mode,
        cfg.profile_scale, cfg.bias_mean, cfg.bias_sd,
    )
    V = rng.standard_normal((m, d))
    sizes = _split_sizes(n, m, cfg.ratio_distribution, rng)
    truth = rng.permutation(np.repeat(np.arange(n), sizes))
    theta = np.array([p.theta for p in profiles])
    eps = rng.normal(0.0, cfg.noise_sigma, m) if cfg.noise_sigma > 0 else np.zeros(m)
    r = np.einsum("ij,ij->i", np.column_stack([V, np.ones(m)]), theta[truth]) + eps
    clip_rate = 0.0
    if cfg.clip_to_scale:
        lo, hi = cfg.scale
        clip_rate = float(np.mean((r < lo) | (r > hi)))
        r = np.clip(r, lo, hi)
    features = MovieFeatures(V, cfg.noise_sigma ** 2, tuple(f"m{j}" for j in range(m)))
    view = AccountView(np.arange(m), r, V, truth, "synthetic")
    return SyntheticAccount(features, view, profiles, clip_rate, eps)


@dataclass
class PopulationConfig:
    """A full ratings dataset with households of known composition.

    ``households`` maps household size to the number of such households.
    Background users are single-user accounts that only feed factorization.
    """

    n_movies: int = 300
    d: int = 5
    n_background_users: int = 200
    background_ratings: tuple = (40, 80)
    households: dict = field(default_factory=lambda: {1: 25, 2: 25})
    member_ratings: tuple = (60, 120)
    noise_sigma: float = 0.1
    profile_separation_deg: float = 45.0
    profile_scale: float = 1.0
    bias_mean: float = 0.0
    bias_sd: float = 1.0
    seed: Optional[int] = None

    @classmethod
    def from_dict(cls, cfg: dict) -> "PopulationConfig":
        cfg = dict(cfg)
        cfg.pop("schema_version", None)
        if "households" in cfg:
            cfg["households"] = {int(k): int(v) for k, v in cfg["households"].items()}
        for k in ("background_ratings", "member_ratings"):
            if k in cfg:
                cfg[k] = tuple(cfg[k])
        unknown = set(cfg) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(f"unknown population config keys: {sorted(unknown)}")
        return cls(**cfg)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["households"] = {str(k): v for k, v in self.households.items()}
        out["background_ratings"] = list(self.background_ratings)
        out["member_ratings"] = list(self.member_ratings)
        return out


class Population(NamedTuple):
    dataset: RatingsDataset
    households: list
    true_features: np.ndarray
    profiles: dict


def generate_population(cfg: PopulationConfig) -> Population:
    """Individual-user ratings plus the household grouping of the members."""
    rng = np.random.default_rng(cfg.seed)
    V = rng.standard_normal((cfg.n_movies, cfg.d))
    sep = math.radians(cfg.profile_separation_deg)
    users, profiles, households = [], {}, []

    def add_user(name, prof, lo, hi):
        k = int(rng.integers(lo, hi + 1))
        movies = np.sort(rng.choice(cfg.n_movies, size=min(k, cfg.n_movies), replace=False))
        r = V[movies] @ prof.u + prof.z + rng.normal(0.0, cfg.noise_sigma, len(movies))
        users.append((name, movies, r))
        profiles[name] = prof

    h = 0
    for size in sorted(cfg.households):
        for _ in range(cfg.households[size]):
            members = generate_profiles(size, cfg.d, rng, sep, "separated", cfg.profile_scale,
                                        cfg.bias_mean, cfg.bias_sd)
            first = len(users)
            for i, prof in enumerate(members):
                add_user(f"h{h:04d}u{i}", prof, *cfg.member_ratings)
            households.append(HouseholdSpec(f"h{h:04d}", tuple(range(first, len(users)))))
            h += 1
    for b in range(cfg.n_background_users):
        prof = generate_profiles(1, cfg.d, rng, profile_scale=cfg.profile_scale,
                                 bias_mean=cfg.bias_mean, bias_sd=cfg.bias_sd)[0]
        add_user(f"b{b:04d}", prof, *cfg.background_ratings)

    a_idx = np.concatenate([np.full(len(mv), i) for i, (_, mv, _) in enumerate(users)])
    m_idx = np.concatenate([mv for _, mv, _ in users])
    vals = np.concatenate([r for _, _, r in users])
    ds = RatingsDataset(
        tuple(u[0] for u in users), tuple(f"m{j:04d}" for j in range(cfg.n_movies)),
        a_idx, m_idx, vals, None,
    )
    return Population(ds, households, V, profiles)
