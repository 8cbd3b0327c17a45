"""Recovering which household member rated which movie."""
from .clustering import SpectralConfig, identify_kmeans, identify_spectral
from .em import EmConfig, em_run, identify_em
from .gpca import GpcaConfig, identify_gpca, monomial_exponents, veronese_dim
from .metrics import (
    TailSplit,
    best_permutation,
    confident_tails,
    delta_scores,
    fit_trimmed_gaussian,
    similarity,
)
from .regression import fit_oracle, fit_profiles, fit_single, solve_profiles

ALGORITHMS = ("em", "gpca", "kmeans", "spectral")


def identify(view, n, algorithm="em", seed=None, **options):
    """Dispatch to one of the four identification algorithms."""
    if algorithm == "em":
        return identify_em(view, n, EmConfig(seed=seed, **options))
    if algorithm == "gpca":
        return identify_gpca(view, n, GpcaConfig(seed=seed, **options))
    if algorithm == "kmeans":
        return identify_kmeans(view, n, seed=seed, **options)
    if algorithm == "spectral":
        return identify_spectral(view, n, SpectralConfig(seed=seed, **options))
    raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


__all__ = [
    "ALGORITHMS",
    "EmConfig",
    "GpcaConfig",
    "SpectralConfig",
    "TailSplit",
    "best_permutation",
    "confident_tails",
    "delta_scores",
    "em_run",
    "fit_oracle",
    "fit_profiles",
    "fit_single",
    "fit_trimmed_gaussian",
    "identify",
    "identify_em",
    "identify_gpca",
    "identify_kmeans",
    "identify_spectral",
    "monomial_exponents",
    "similarity",
    "solve_profiles",
    "veronese_dim",
]
