"""Quantile and categorical parametric families and their projections."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import MASS_TOL, DiracMixture, quantile

__all__ = [
    "QuantileRep",
    "CategoricalRep",
    "quantile_levels",
    "project_quantile",
    "project_categorical",
    "categorical_split",
    "rep_to_mixture",
    "uniform_support",
    "support_for_mdp",
]


def quantile_levels(num_atoms: int) -> np.ndarray:
    """Midpoint levels tau_i = (2i - 1) / (2m), i = 1..m."""
    if num_atoms < 1:
        raise ValueError("need at least one atom")
    return (2.0 * np.arange(1, num_atoms + 1) - 1.0) / (2.0 * num_atoms)


@dataclass(frozen=True, eq=False)
class QuantileRep:
    """m equally weighted atoms at non-decreasing locations."""

    locations: np.ndarray

    def __post_init__(self):
        z = np.array(self.locations, dtype=float).ravel()
        if z.size < 1:
            raise ValueError("a quantile representation needs at least one atom")
        if np.any(np.diff(z) < 0):
            raise ValueError("quantile locations must be non-decreasing")
        z.setflags(write=False)
        object.__setattr__(self, "locations", z)

    @property
    def num_atoms(self) -> int:
        return self.locations.size

    def to_mixture(self) -> DiracMixture:
        m = self.num_atoms
        return DiracMixture.from_atoms(self.locations, np.full(m, 1.0 / m))


@dataclass(frozen=True, eq=False)
class CategoricalRep:
    """Probabilities over a fixed, strictly increasing support grid.

    ``probs`` may carry negative entries when it is the image of a signed
    measure; :attr:`is_probability` tells the two apart.
    """

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        s = np.array(self.support, dtype=float).ravel()
        p = np.array(self.probs, dtype=float).ravel()
        if s.size < 2:
            raise ValueError("categorical support needs at least two points")
        if np.any(np.diff(s) <= 0):
            raise ValueError("categorical support must be strictly increasing")
        if p.shape != s.shape:
            raise ValueError("probs and support must have equal length")
        s.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "probs", p)

    @property
    def is_probability(self) -> bool:
        return abs(self.probs.sum() - 1.0) <= MASS_TOL and bool(np.all(self.probs >= -1e-12))

    def to_mixture(self) -> DiracMixture:
        return DiracMixture.from_atoms(self.support, self.probs)


def uniform_support(v_max: float, num_atoms: int, v_min: float | None = None) -> np.ndarray:
    v_min = -v_max if v_min is None else v_min
    if num_atoms < 2:
        raise ValueError("categorical support needs at least two points")
    return np.linspace(v_min, v_max, num_atoms)


def support_for_mdp(mdp, num_atoms: int) -> np.ndarray:
    """Grid on [-V, V] with V = max|r| / (1 - gamma), which contains every return."""
    v_max = max(mdp.reward_bound / (1.0 - mdp.gamma), 1e-6)
    return uniform_support(v_max, num_atoms)


def project_quantile(m: DiracMixture, num_atoms: int) -> QuantileRep:
    """W_1-optimal m-atom approximation: atoms at quantiles (2i - 1) / 2m."""
    m.require_probability("quantile projection")
    return QuantileRep(quantile(m, quantile_levels(num_atoms)))


def categorical_split(locs: np.ndarray, weights: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Linear (triangular-kernel) mass split of weighted atoms onto ``support``.

    Atoms outside the grid are clamped to its end points. The map is linear in
    the weights, so signed inputs are handled term by term.
    """
    support = np.asarray(support, dtype=float)
    if support.size < 2:
        raise ValueError("categorical support needs at least two points")
    z = np.clip(np.asarray(locs, dtype=float), support[0], support[-1])
    w = np.asarray(weights, dtype=float)
    k = np.clip(np.searchsorted(support, z, side="right") - 1, 0, support.size - 2)
    lo, hi = support[k], support[k + 1]
    frac_hi = (z - lo) / (hi - lo)
    out = np.zeros(support.size)
    np.add.at(out, k, w * (1.0 - frac_hi))
    np.add.at(out, k + 1, w * frac_hi)
    return out


def project_categorical(m: DiracMixture, support) -> CategoricalRep:
    """Cramér-optimal projection onto a fixed grid.

    Probability inputs give a probability vector; signed inputs are projected
    by linearity and the result is flagged through ``is_probability``.
    """
    support = np.asarray(support, dtype=float)
    if support.size < 2:
        raise ValueError("categorical support needs at least two points")
    return CategoricalRep(support, categorical_split(m.locs, m.weights, support))


def rep_to_mixture(rep) -> DiracMixture:
    if isinstance(rep, (QuantileRep, CategoricalRep)):
        return rep.to_mixture()
    raise TypeError(f"not a parametric representation: {type(rep).__name__}")
