"""Finite signed measures on the real line and exact 1-D probability metrics.

A :class:`DiracMixture` is a finite sum of weighted point masses. Weights may
be negative, which is how distributional TD errors and sampled back-up
targets are represented. All metrics are computed exactly from the step
functions (CDFs and quantile functions), never by sampling or binning.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "DiracMixture",
    "dirac",
    "pushforward",
    "combine",
    "cdf",
    "quantile",
    "wasserstein",
    "wasserstein_inf",
    "lp_distance",
    "sup_metric",
    "compress",
    "PushforwardSpec",
    "to_csv",
    "from_csv",
    "MASS_TOL",
    "NEG_TOL",
]

MASS_TOL = 1e-10
NEG_TOL = 1e-12
# Cumulative-weight comparisons absorb summation round-off of this size.
_CUM_TOL = 1e-12


class NotAProbabilityError(ValueError):
    """Raised when an operation needs a probability measure but got a signed one."""


@dataclass(frozen=True, eq=False)
class DiracMixture:
    """Weighted point masses with strictly increasing, merged locations.

    Construct through :meth:`from_atoms` (sorts and merges) or with arrays that
    already satisfy the invariant. Zero-weight atoms are dropped on merge.
    """

    locs: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        locs = np.array(self.locs, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if locs.shape != weights.shape or locs.ndim != 1:
            raise ValueError("locs and weights must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(locs)) and np.all(np.isfinite(weights))):
            raise ValueError("atoms must be finite")
        if locs.size > 1 and np.any(np.diff(locs) <= 0):
            locs, weights = _normalize(locs, weights)
        locs.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "locs", locs)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_atoms(cls, locs, weights=None) -> "DiracMixture":
        locs = np.asarray(locs, dtype=float).ravel()
        if weights is None:
            weights = np.full(locs.shape, 1.0 / max(len(locs), 1))
        weights = np.asarray(weights, dtype=float).ravel()
        if locs.shape != weights.shape:
            raise ValueError("locs and weights must have equal length")
        return cls(*_normalize(locs, weights))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]]) -> "DiracMixture":
        pairs = list(pairs)
        if not pairs:
            return cls(np.empty(0), np.empty(0))
        locs, weights = zip(*pairs)
        return cls.from_atoms(locs, weights)

    def __len__(self) -> int:
        return self.locs.size

    def atoms(self) -> list[tuple[float, float]]:
        return [(float(z), float(w)) for z, w in zip(self.locs, self.weights)]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def mean(self) -> float:
        """First moment (sum of weight * location); equals the mean for probabilities."""
        return float(np.dot(self.weights, self.locs))

    def is_probability(self, tol: float = MASS_TOL) -> bool:
        return abs(self.total_mass - 1.0) <= tol and bool(np.all(self.weights >= -NEG_TOL))

    def is_signed(self) -> bool:
        return bool(np.any(self.weights < -NEG_TOL))

    def require_probability(self, what: str = "operation") -> None:
        if not self.is_probability():
            raise NotAProbabilityError(
                f"{what} needs a probability measure (mass={self.total_mass!r}, "
                f"min weight={self.weights.min() if len(self) else 0.0!r})"
            )

    def scale_weights(self, coef: float) -> "DiracMixture":
        return DiracMixture.from_atoms(self.locs, coef * self.weights)

    def allclose(self, other: "DiracMixture", atol: float = 1e-12) -> bool:
        return (
            len(self) == len(other)
            and np.allclose(self.locs, other.locs, rtol=0, atol=atol)
            and np.allclose(self.weights, other.weights, rtol=0, atol=atol)
        )

    def __repr__(self) -> str:
        if len(self) <= 6:
            body = ", ".join(f"({z:g}, {w:g})" for z, w in self.atoms())
        else:
            body = f"{len(self)} atoms on [{self.locs[0]:g}, {self.locs[-1]:g}]"
        return f"DiracMixture[{body}; mass={self.total_mass:g}]"


def _normalize(locs: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort, merge exactly equal locations, drop exact-zero weights."""
    if locs.size == 0:
        return np.empty(0), np.empty(0)
    order = np.argsort(locs, kind="stable")
    locs = locs[order]
    weights = weights[order]
    starts = np.flatnonzero(np.concatenate([[True], np.diff(locs) != 0]))
    merged_w = np.add.reduceat(weights, starts)
    merged_z = locs[starts]
    keep = merged_w != 0
    return np.ascontiguousarray(merged_z[keep]), np.ascontiguousarray(merged_w[keep])


@dataclass(frozen=True)
class PushforwardSpec:
    """One back-up term: ``weight * (z -> shift + scale * z)_# eta(source)``."""

    shift: float
    scale: float
    source: tuple[int, int]
    weight: float


def dirac(z: float, weight: float = 1.0) -> DiracMixture:
    return DiracMixture(np.array([float(z)]), np.array([float(weight)]))


def pushforward(m: DiracMixture, shift: float, scale: float) -> DiracMixture:
    """Image of ``m`` under z -> shift + scale * z (scale >= 0)."""
    if scale < 0:
        raise ValueError(f"pushforward scale must be non-negative, got {scale}")
    if scale == 0:
        return DiracMixture.from_atoms([shift], [m.total_mass]) if len(m) else m
    return DiracMixture(shift + scale * m.locs, m.weights.copy())


def combine(terms: Iterable[tuple[float, DiracMixture]]) -> DiracMixture:
    """Weighted sum ``sum_i coef_i * m_i`` of (possibly signed) mixtures."""
    locs, weights = [], []
    for coef, m in terms:
        if coef == 0 or len(m) == 0:
            continue
        locs.append(m.locs)
        weights.append(coef * m.weights)
    if not locs:
        return DiracMixture(np.empty(0), np.empty(0))
    return DiracMixture.from_atoms(np.concatenate(locs), np.concatenate(weights))


def cdf(m: DiracMixture, y) -> float | np.ndarray:
    """Right-continuous running weight sum F(y) = sum of weights at z <= y."""
    cum = np.concatenate([[0.0], np.cumsum(m.weights)])
    idx = np.searchsorted(m.locs, y, side="right")
    out = cum[idx]
    return float(out) if np.ndim(out) == 0 else out


def _cumulative(m: DiracMixture) -> np.ndarray:
    cum = np.cumsum(m.weights)
    cum[-1] = 1.0
    return cum


def quantile(m: DiracMixture, tau) -> float | np.ndarray:
    """Generalized inverse inf{z : F(z) >= tau} of a probability measure."""
    m.require_probability("quantile")
    tau_arr = np.asarray(tau, dtype=float)
    if np.any((tau_arr < 0) | (tau_arr > 1)):
        raise ValueError("quantile levels must lie in [0, 1]")
    cum = _cumulative(m)
    idx = np.searchsorted(cum, tau_arr - _CUM_TOL, side="left")
    out = m.locs[np.minimum(idx, len(m) - 1)]
    return float(out) if np.ndim(out) == 0 else out


def _quantile_segments(m1: DiracMixture, m2: DiracMixture):
    """Segments of (0, 1] on which both quantile functions are constant."""
    m1.require_probability("Wasserstein distance")
    m2.require_probability("Wasserstein distance")
    c1, c2 = _cumulative(m1), _cumulative(m2)
    bounds = np.unique(np.concatenate([[0.0], np.clip(c1, 0, 1), np.clip(c2, 0, 1)]))
    lengths = np.diff(bounds)
    mids = 0.5 * (bounds[:-1] + bounds[1:])
    q1 = m1.locs[np.minimum(np.searchsorted(c1, mids, side="left"), len(m1) - 1)]
    q2 = m2.locs[np.minimum(np.searchsorted(c2, mids, side="left"), len(m2) - 1)]
    return lengths, np.abs(q1 - q2)


def wasserstein(m1: DiracMixture, m2: DiracMixture, p: float = 1.0) -> float:
    """Exact W_p between probability mixtures (p >= 1, or ``np.inf``)."""
    if np.isinf(p):
        return wasserstein_inf(m1, m2)
    if p < 1:
        raise ValueError("W_p needs p >= 1")
    lengths, gaps = _quantile_segments(m1, m2)
    return float(np.sum(lengths * gaps**p) ** (1.0 / p))


def wasserstein_inf(m1: DiracMixture, m2: DiracMixture) -> float:
    lengths, gaps = _quantile_segments(m1, m2)
    # segments thinner than the cumulative round-off are artefacts
    real = lengths > _CUM_TOL
    return float(gaps[real].max()) if real.any() else 0.0


def lp_distance(m1: DiracMixture, m2: DiracMixture, p: float = 2.0) -> float:
    """Exact L_p (Cramér-p) distance ``(int |F1 - F2|^p dy)^(1/p)``.

    Defined for signed measures provided both have the same total mass.
    ``p = np.inf`` gives the sup-norm of the CDF difference.
    """
    if p < 1:
        raise ValueError("L_p needs p >= 1")
    # tolerance scales with total variation: signed iterates cancel large weights
    scale = max(1.0, float(np.abs(m1.weights).sum()), float(np.abs(m2.weights).sum()))
    if abs(m1.total_mass - m2.total_mass) > MASS_TOL * scale:
        raise ValueError(
            f"L_p distance diverges: total masses differ ({m1.total_mass!r} vs {m2.total_mass!r})"
        )
    grid = np.union1d(m1.locs, m2.locs)
    if grid.size < 2:
        return 0.0
    diff = np.abs(cdf(m1, grid[:-1]) - cdf(m2, grid[:-1]))
    if np.isinf(p):
        return float(diff.max())
    widths = np.diff(grid)
    return float(np.sum(widths * diff**p) ** (1.0 / p))


_METRICS = {
    "wasserstein": wasserstein,
    "w": wasserstein,
    "lp": lp_distance,
    "l": lp_distance,
}


def sup_metric(
    v1: Mapping, v2: Mapping, metric: str = "wasserstein", p: float = 1.0
) -> float:
    """Max over keys of a base metric between two per-pair measure vectors."""
    if set(v1) != set(v2):
        raise ValueError("measure vectors are indexed by different pairs")
    try:
        base = _METRICS[metric.lower()]
    except KeyError:
        raise ValueError(f"unknown metric {metric!r}") from None
    return max(base(v1[k], v2[k], p) for k in v1)


def compress(m: DiracMixture, tol: float = 1e-12) -> DiracMixture:
    """Merge runs of atoms whose consecutive gaps are below ``tol``.

    Probability inputs keep the mass-weighted mean location of each run;
    signed inputs put the summed weight at the run's first location.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    if len(m) < 2 or tol == 0:
        return m
    gaps = np.diff(m.locs)
    starts = np.flatnonzero(np.concatenate([[True], gaps >= tol]))
    if starts.size == len(m):
        return m
    w = np.add.reduceat(m.weights, starts)
    if m.is_probability():
        zw = np.add.reduceat(m.weights * m.locs, starts)
        with np.errstate(invalid="ignore", divide="ignore"):
            z = np.where(w != 0, zw / w, m.locs[starts])
    else:
        z = m.locs[starts]
    return DiracMixture.from_atoms(z, w)


def to_csv(m: DiracMixture, header: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(["location", "weight"])
    for z, w in m.atoms():
        writer.writerow([repr(z), repr(w)])
    return buf.getvalue()


def from_csv(text: str) -> DiracMixture:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    if rows and rows[0][0] == "location":
        rows = rows[1:]
    return DiracMixture.from_pairs((float(z), float(w)) for z, w in rows)


def mixture_of(terms: Sequence[tuple[float, float]]) -> DiracMixture:
    """Shorthand: ``mixture_of([(z, w), ...])``."""
    return DiracMixture.from_pairs(terms)
