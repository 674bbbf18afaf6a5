"""Exact distributional operators on tabular MDPs.

Every multi-step back-up here is evaluated in closed form by enumerating
trajectory prefixes. Prefixes that end in the same state with the same
discounted reward sum are merged, so the work grows with the number of
distinct partial returns rather than the number of raw paths.

Conventions
-----------
A trace horizon ``n`` means c_t = 0 for t > n: the truncated Retrace target
sums TD errors for t = 0..n and bootstraps at depths 1..n + 1. With c_t == 0
the operator is the one-step distributional Bellman operator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .measures import (
    DiracMixture,
    PushforwardSpec,
    combine,
    compress,
    dirac,
    lp_distance,
    pushforward,
    wasserstein,
)
from .mdp import Policy, TabularMDP, TraceConfig, make_rng, trace_mass
from .representations import categorical_split, project_quantile, quantile_levels

__all__ = [
    "DistVector",
    "BackupSpec",
    "ContractionRate",
    "IterateLog",
    "bellman_backup",
    "retrace_decompose",
    "uncorrected_decompose",
    "is_on_return_decompose",
    "apply_backup",
    "retrace_backup",
    "uncorrected_nstep_backup",
    "is_on_return_backup",
    "alt_bar_backup",
    "alt_tilde_backup",
    "value_retrace_backup",
    "trace_occupancy",
    "contraction_rate",
    "beta_series",
    "DistOperator",
    "make_operator",
    "dp_iterate",
    "fixed_point",
    "q_values",
    "dirac_vector",
    "quantile_vector",
    "project_vector",
    "vector_distance",
    "ground_truth",
    "monte_carlo_returns",
    "OPERATOR_KINDS",
]

DistVector = dict  # (state, action) -> DiracMixture

OPERATOR_KINDS = ("bellman", "retrace", "uncorrected", "alt_bar", "alt_tilde", "is_on_return")


# ---------------------------------------------------------------------------
# One-step operator
# ---------------------------------------------------------------------------


def _policy_mixture(eta: Mapping, pi: Policy, y: int) -> DiracMixture:
    """eta(y, A^pi) = sum_b pi(b|y) eta(y, b)."""
    return combine((pi.probs[y, b], eta[(y, b)]) for b in range(pi.probs.shape[1]) if pi.probs[y, b] > 0)


def bellman_backup(eta: Mapping, mdp: TabularMDP, pi: Policy, x: int, a: int) -> DiracMixture:
    """One-step target E[(b_{R, gamma})_# eta(X', A'^pi)] at (x, a)."""
    terms = []
    for r, pr in mdp.reward(x, a):
        for y in np.flatnonzero(mdp.transition[x, a]):
            nxt = _policy_mixture(eta, pi, int(y))
            terms.append((pr * mdp.transition[x, a, y], pushforward(nxt, r, mdp.gamma)))
    return combine(terms)


# ---------------------------------------------------------------------------
# Back-up decompositions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BackupSpec:
    """A back-up target as a weighted sum of pushforward terms.

    Term ``i`` contributes ``weights[i] * (b_{shifts[i], scales[i]})_# eta(source_i)``
    where ``source_i = divmod(sources[i], num_actions)``. ``depths[i]`` is the
    bootstrap step t of the term (scale = gamma ** t). ``tail_mass`` is the
    share of the weight carried by the deepest bootstrap terms because the
    traces were cut at the horizon; it is already part of ``weights``.
    """

    pair: tuple[int, int]
    weights: np.ndarray
    shifts: np.ndarray
    scales: np.ndarray
    sources: np.ndarray
    depths: np.ndarray
    num_actions: int
    tail_mass: float = 0.0

    def __len__(self) -> int:
        return self.weights.size

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @property
    def min_weight(self) -> float:
        return float(self.weights.min()) if len(self) else 0.0

    def source_pairs(self) -> list[tuple[int, int]]:
        return [divmod(int(s), self.num_actions) for s in self.sources]

    def terms(self) -> list[PushforwardSpec]:
        return [
            PushforwardSpec(float(g), float(c), src, float(w))
            for g, c, src, w in zip(self.shifts, self.scales, self.source_pairs(), self.weights)
        ]

    def contraction(self) -> float:
        """sum_i w_i * scale_i, the Lipschitz factor of this back-up."""
        return float(np.dot(self.weights, self.scales))


def _merge_nodes(ys, Gs, Ws, extra=None):
    """Sum weights of prefix nodes sharing (state, partial return[, extra])."""
    keep = Ws != 0
    ys, Gs, Ws = ys[keep], Gs[keep], Ws[keep]
    if extra is not None:
        extra = extra[keep]
    if ys.size == 0:
        return ys, Gs, Ws, extra
    keys = (Gs, ys) if extra is None else (extra, Gs, ys)
    order = np.lexsort(keys)
    ys, Gs, Ws = ys[order], Gs[order], Ws[order]
    change = (np.diff(ys) != 0) | (np.diff(Gs) != 0)
    if extra is not None:
        extra = extra[order]
        change |= np.diff(extra) != 0
    starts = np.flatnonzero(np.concatenate([[True], change]))
    Ws = np.add.reduceat(Ws, starts)
    return ys[starts], Gs[starts], Ws, (extra[starts] if extra is not None else None)


def _expand(mdp: TabularMDP, ys, Gs, Ws, cont, t, extra=None, extra_factor=None):
    """Advance depth-t prefixes by one step with per-(y, b) continuation weights."""
    S, A = mdp.num_states, mdp.num_actions
    K = mdp.reward_values.shape[-1]
    cw = Ws[:, None] * cont[ys]  # (N, A)
    rv = mdp.reward_values[ys]  # (N, A, K)
    rp = mdp.reward_probs[ys]  # (N, A, K)
    P = mdp.transition[ys]  # (N, A, S)
    shape = (ys.size, A, K, S)
    newW = cw[:, :, None, None] * rp[:, :, :, None] * P[:, :, None, :]
    newG = np.broadcast_to(Gs[:, None, None, None] + mdp.gamma**t * rv[:, :, :, None], shape)
    newY = np.broadcast_to(np.arange(S)[None, None, None, :], shape)
    newX = None
    if extra is not None:
        newX = np.broadcast_to((extra[:, None] * extra_factor[ys])[:, :, None, None], shape).ravel()
    return _merge_nodes(newY.ravel(), newG.ravel(), newW.ravel(), newX)


def _initial_nodes(mdp: TabularMDP, x: int, a: int):
    S = mdp.num_states
    K = mdp.reward_values.shape[-1]
    ys = np.tile(np.arange(S), K)
    Gs = np.repeat(mdp.reward_values[x, a], S)
    Ws = np.repeat(mdp.reward_probs[x, a], S) * np.tile(mdp.transition[x, a], K)
    return _merge_nodes(ys, Gs, Ws)[:3]


def _enumerate(
    mdp: TabularMDP,
    x: int,
    a: int,
    max_depth: int,
    emit: Callable[[int], np.ndarray],
    cont: Callable[[int], np.ndarray],
) -> BackupSpec:
    """Generic prefix enumeration.

    At depth t every prefix ending in state y emits, for each action b, a term
    with weight ``W * emit(t)[y, b]`` bootstrapping from eta(y, b), and
    continues with weight ``W * cont(t)[y, b]`` (times reward and transition
    probabilities) to depth t + 1.
    """
    A = mdp.num_actions
    gamma = mdp.gamma
    ys, Gs, Ws = _initial_nodes(mdp, x, a)
    out_w, out_g, out_c, out_s, out_d = [], [], [], [], []
    tail = 0.0
    for t in range(1, max_depth + 1):
        e = emit(t)
        tw = Ws[:, None] * e[ys]  # (N, A)
        nz = np.nonzero(tw)
        if nz[0].size:
            out_w.append(tw[nz])
            out_g.append(Gs[nz[0]])
            out_s.append(ys[nz[0]] * A + nz[1])
            out_c.append(np.full(nz[0].size, gamma**t))
            out_d.append(np.full(nz[0].size, t))
            if t == max_depth:
                tail = float(tw[nz].sum())
        if t == max_depth:
            break
        ys, Gs, Ws, _ = _expand(mdp, ys, Gs, Ws, cont(t), t)
        if ys.size == 0:
            break
    if not out_w:
        empty = np.empty(0)
        return BackupSpec((x, a), empty, empty, empty, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), A)
    return BackupSpec(
        (x, a),
        np.concatenate(out_w),
        np.concatenate(out_g),
        np.concatenate(out_c),
        np.concatenate(out_s).astype(np.int64),
        np.concatenate(out_d).astype(np.int64),
        A,
        tail,
    )


def retrace_decompose(
    mdp: TabularMDP,
    pi: Policy,
    mu: Policy,
    trace: TraceConfig,
    x: int,
    a: int,
    horizon: int | None = None,
) -> BackupSpec:
    """Convex-combination form of the truncated distributional Retrace target.

    Depth-t terms carry ``E_mu[c_1..c_{t-1} (pi(b|X_t) - c_t(X_t, b) mu(b|X_t))]``
    restricted to a reward prefix and next state. The back-up does not depend on
    the distribution vector, so the result can be reused across iterations.
    """
    if horizon is not None:
        trace = trace.with_horizon(horizon)
    n = trace.horizon
    masses = {t: trace_mass(trace, pi, mu, t) for t in range(1, n + 2)}

    def emit(t):
        return pi.probs - masses[t]

    def cont(t):
        return masses[t]

    return _enumerate(mdp, x, a, n + 1, emit, cont)


def uncorrected_decompose(mdp: TabularMDP, pi: Policy, mu: Policy, n: int, x: int, a: int) -> BackupSpec:
    """n-step target along behaviour paths with no IS weights, bootstrapped with pi at depth n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    zeros = np.zeros_like(pi.probs)

    def emit(t):
        return pi.probs if t == n else zeros

    def cont(t):
        return mu.probs

    return _enumerate(mdp, x, a, n, emit, cont)


def is_on_return_decompose(mdp: TabularMDP, pi: Policy, mu: Policy, n: int, x: int, a: int) -> BackupSpec:
    """Variant that importance-weights the partial return instead of the path.

    Produces E_mu[(b_{rho_{1:n-1} G_{0:n-1}, gamma^n})_# eta(X_n, A_n^pi)]. It is a
    valid probability back-up but does not correct the off-policy mismatch;
    kept as a reference point for tests and experiments.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    A = mdp.num_actions
    rho = np.divide(pi.probs, mu.probs, out=np.zeros_like(pi.probs), where=mu.probs > 0)
    ys, Gs, Ws = _initial_nodes(mdp, x, a)
    Rs = np.ones_like(Gs)
    for t in range(1, n):
        ys, Gs, Ws, Rs = _expand(mdp, ys, Gs, Ws, mu.probs, t, extra=Rs, extra_factor=rho)
    tw = Ws[:, None] * pi.probs[ys]
    nz = np.nonzero(tw)
    return BackupSpec(
        (x, a),
        tw[nz],
        (Rs * Gs)[nz[0]],
        np.full(nz[0].size, mdp.gamma**n),
        (ys[nz[0]] * A + nz[1]).astype(np.int64),
        np.full(nz[0].size, n, dtype=np.int64),
        A,
    )


def apply_backup(spec: BackupSpec, eta: Mapping) -> DiracMixture:
    """Evaluate ``sum_i w_i (b_{shift_i, scale_i})_# eta(source_i)`` exactly."""
    if len(spec) == 0:
        return DiracMixture(np.empty(0), np.empty(0))
    A = spec.num_actions
    locs, weights = [], []
    for src in np.unique(spec.sources):
        sel = spec.sources == src
        m = eta[divmod(int(src), A)]
        locs.append((spec.shifts[sel, None] + spec.scales[sel, None] * m.locs[None, :]).ravel())
        weights.append((spec.weights[sel, None] * m.weights[None, :]).ravel())
    return DiracMixture.from_atoms(np.concatenate(locs), np.concatenate(weights))


def retrace_backup(eta, mdp, pi, mu, trace, x, a, horizon=None) -> DiracMixture:
    return apply_backup(retrace_decompose(mdp, pi, mu, trace, x, a, horizon), eta)


def uncorrected_nstep_backup(eta, mdp, pi, mu, n, x, a) -> DiracMixture:
    return apply_backup(uncorrected_decompose(mdp, pi, mu, n, x, a), eta)


def is_on_return_backup(eta, mdp, pi, mu, n, x, a) -> DiracMixture:
    return apply_backup(is_on_return_decompose(mdp, pi, mu, n, x, a), eta)


# ---------------------------------------------------------------------------
# Path-independent alternatives and the value-based operator
# ---------------------------------------------------------------------------


def trace_occupancy(mdp: TabularMDP, pi: Policy, mu: Policy, trace: TraceConfig, x: int, a: int) -> np.ndarray:
    """``d[t, y, b] = E_mu[c_{1:t} 1{X_t = y, A_t = b}]`` for t = 0..horizon."""
    n = trace.horizon
    S, A = mdp.num_states, mdp.num_actions
    d = np.zeros((n + 1, S, A))
    d[0, x, a] = 1.0
    for t in range(1, n + 1):
        state_mass = np.einsum("yb,ybz->z", d[t - 1], mdp.transition)
        d[t] = state_mass[:, None] * trace_mass(trace, pi, mu, t)
    return d


def _alt_backup(eta, mdp, pi, mu, trace, x, a, pushforward_scaled: bool) -> DiracMixture:
    d = trace_occupancy(mdp, pi, mu, trace, x, a)
    one_step: dict = {}
    terms = [(1.0, eta[(x, a)])]
    for t in range(d.shape[0]):
        for y, b in zip(*np.nonzero(d[t])):
            y, b = int(y), int(b)
            if (y, b) not in one_step:
                one_step[(y, b)] = combine([(1.0, bellman_backup(eta, mdp, pi, y, b)), (-1.0, eta[(y, b)])])
            td = one_step[(y, b)]
            if pushforward_scaled:
                terms.append((d[t, y, b], pushforward(td, 0.0, mdp.gamma**t)))
            else:
                terms.append((d[t, y, b] * mdp.gamma**t, td))
    return combine(terms)


def alt_bar_backup(eta, mdp, pi, mu, trace, x, a) -> DiracMixture:
    """eta(x,a) + E_mu[sum_t c_{1:t} (b_{0, gamma^t})_# Delta_t]; signed in general."""
    return _alt_backup(eta, mdp, pi, mu, trace, x, a, pushforward_scaled=True)


def alt_tilde_backup(eta, mdp, pi, mu, trace, x, a) -> DiracMixture:
    """eta(x,a) + E_mu[sum_t c_{1:t} gamma^t Delta_t]; signed in general."""
    return _alt_backup(eta, mdp, pi, mu, trace, x, a, pushforward_scaled=False)


def value_retrace_backup(Q, mdp: TabularMDP, pi: Policy, mu: Policy, trace: TraceConfig, x: int, a: int) -> float:
    """Value-based Retrace target Q(x,a) + E_mu[sum_t c_{1:t} gamma^t delta_t].

    Computed from discounted occupancies, independently of the prefix
    enumeration used by the distributional operator.
    """
    Q = np.asarray(Q, dtype=float)
    v_next = (pi.probs * Q).sum(axis=1)
    td = mdp.mean_reward + mdp.gamma * mdp.transition @ v_next - Q
    d = trace_occupancy(mdp, pi, mu, trace, x, a)
    disc = mdp.gamma ** np.arange(d.shape[0])
    return float(Q[x, a] + np.einsum("t,tyb,yb->", disc, d, td))


# ---------------------------------------------------------------------------
# Contraction
# ---------------------------------------------------------------------------


class ContractionRate(NamedTuple):
    beta: float
    tail_bound: float
    per_pair: dict


def contraction_rate(mdp: TabularMDP, pi: Policy, mu: Policy, trace: TraceConfig, horizon: int | None = None) -> ContractionRate:
    """Modulus max_{x,a} sum_t gamma^t E[c_{1:t-1}(1 - c_t)] of the truncated operator.

    Read off the Retrace decomposition (sum of weight * scale). ``tail_bound``
    is gamma^(n+1), the most the un-truncated operator's modulus can differ by.
    """
    if horizon is not None:
        trace = trace.with_horizon(horizon)
    per_pair = {
        (x, a): retrace_decompose(mdp, pi, mu, trace, x, a).contraction() for x, a in mdp.pairs()
    }
    return ContractionRate(max(per_pair.values()), mdp.gamma ** (trace.horizon + 1), per_pair)


def beta_series(mdp: TabularMDP, pi: Policy, mu: Policy, trace: TraceConfig) -> float:
    """Same modulus from state occupancies (no prefix enumeration)."""
    n = trace.horizon
    best = 0.0
    for x, a in mdp.pairs():
        d = trace_occupancy(mdp, pi, mu, trace, x, a)
        beta = 0.0
        for t in range(1, n + 2):
            state_mass = np.einsum("yb,ybz->z", d[t - 1], mdp.transition)
            c_mean = trace_mass(trace, pi, mu, t).sum(axis=1)
            beta += mdp.gamma**t * float(state_mass @ (1.0 - c_mean))
        best = max(best, beta)
    return best


# ---------------------------------------------------------------------------
# Operators on whole vectors and DP
# ---------------------------------------------------------------------------


@dataclass
class DistOperator:
    """A distributional operator bound to an MDP and policies.

    For the pushforward-form kinds the per-pair decompositions are computed
    once and reused for every application.
    """

    kind: str
    mdp: TabularMDP
    pi: Policy
    mu: Policy
    trace: TraceConfig | None = None
    n: int = 1
    _specs: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}; expected one of {OPERATOR_KINDS}")
        if self.kind in ("retrace", "alt_bar", "alt_tilde") and self.trace is None:
            raise ValueError(f"operator {self.kind!r} needs a trace configuration")

    def spec(self, x: int, a: int) -> BackupSpec | None:
        if self.kind in ("alt_bar", "alt_tilde"):
            return None
        key = (x, a)
        if key not in self._specs:
            if self.kind == "bellman":
                spec = retrace_decompose(self.mdp, self.pi, self.mu, TraceConfig.constant(0.0, horizon=0), x, a)
            elif self.kind == "retrace":
                spec = retrace_decompose(self.mdp, self.pi, self.mu, self.trace, x, a)
            elif self.kind == "uncorrected":
                spec = uncorrected_decompose(self.mdp, self.pi, self.mu, self.n, x, a)
            else:
                spec = is_on_return_decompose(self.mdp, self.pi, self.mu, self.n, x, a)
            self._specs[key] = spec
        return self._specs[key]

    def backup(self, eta: Mapping, x: int, a: int) -> DiracMixture:
        if self.kind == "alt_bar":
            return alt_bar_backup(eta, self.mdp, self.pi, self.mu, self.trace, x, a)
        if self.kind == "alt_tilde":
            return alt_tilde_backup(eta, self.mdp, self.pi, self.mu, self.trace, x, a)
        return apply_backup(self.spec(x, a), eta)

    def __call__(self, eta: Mapping) -> DistVector:
        return {(x, a): self.backup(eta, x, a) for x, a in self.mdp.pairs()}

    @property
    def modulus(self) -> float | None:
        """Contraction factor sum_i w_i scale_i (None for the signed alternatives)."""
        if self.kind in ("alt_bar", "alt_tilde"):
            return None
        return max(self.spec(x, a).contraction() for x, a in self.mdp.pairs())


def make_operator(kind, mdp, pi, mu=None, trace=None, n=1) -> DistOperator:
    return DistOperator(kind, mdp, pi, pi if mu is None else mu, trace, n)


def dirac_vector(mdp: TabularMDP, z=0.0) -> DistVector:
    """Dirac at ``z`` everywhere (``z`` may be an (S, A) array)."""
    z = np.broadcast_to(np.asarray(z, dtype=float), (mdp.num_states, mdp.num_actions))
    return {(x, a): dirac(z[x, a]) for x, a in mdp.pairs()}


def quantile_vector(locations) -> DistVector:
    """Mapping (x, a) -> equally weighted atoms from an (S, A, m) array."""
    locations = np.asarray(locations, dtype=float)
    S, A, m = locations.shape
    w = np.full(m, 1.0 / m)
    return {(x, a): DiracMixture.from_atoms(locations[x, a], w) for x in range(S) for a in range(A)}


def _project_one(m: DiracMixture, projection):
    kind = projection[0]
    if kind == "none":
        return compress(m, 1e-12)
    if kind == "quantile":
        num = projection[1]
        return DiracMixture.from_atoms(project_quantile(m, num).locations, np.full(num, 1.0 / num))
    if kind == "categorical":
        support = np.asarray(projection[1], dtype=float)
        return DiracMixture.from_atoms(support, categorical_split(m.locs, m.weights, support))
    raise ValueError(f"unknown projection {projection!r}")


def _parse_projection(projection):
    if projection is None or projection == "none":
        return ("none",)
    if isinstance(projection, str):
        kind, _, arg = projection.partition(":")
        if kind == "quantile":
            return ("quantile", int(arg))
        raise ValueError(f"cannot parse projection {projection!r}")
    return tuple(projection)


def project_vector(eta: Mapping, projection) -> DistVector:
    """Apply ``("none",)``, ``("quantile", m)`` or ``("categorical", grid)`` pair-wise."""
    projection = _parse_projection(projection)
    return {k: _project_one(m, projection) for k, m in eta.items()}


def vector_distance(v1: Mapping, v2: Mapping, metric: str, p: float, pair=None) -> float:
    """Sup over pairs (or the value at ``pair``) of W_p (``metric="w"``) or L_p (``"l"``)."""
    base = wasserstein if metric.lower() in ("w", "wasserstein") else lp_distance
    if pair is not None:
        return base(v1[pair], v2[pair], p)
    return max(base(v1[k], v2[k], p) for k in v1)


@dataclass
class IterateLog:
    """DP iterates and per-iteration distances to reference vectors.

    ``records`` rows are (iteration, metric_name, reference_name, value).
    """

    iterates: list
    records: list = field(default_factory=list)

    def series(self, metric_name: str, reference_name: str) -> np.ndarray:
        rows = [(k, v) for k, m, r, v in self.records if m == metric_name and r == reference_name]
        rows.sort()
        return np.array([v for _, v in rows])

    def to_csv(self) -> str:
        lines = ["iteration,metric_name,reference_name,value"]
        lines += [f"{k},{m},{r},{v!r}" for k, m, r, v in self.records]
        return "\n".join(lines) + "\n"


def _metric_name(metric: str, p: float, pair) -> str:
    base = "W" if metric.lower() in ("w", "wasserstein") else "L"
    ps = "inf" if np.isinf(p) else f"{p:g}"
    where = "sup" if pair is None else f"({pair[0]},{pair[1]})"
    return f"{base}{ps}@{where}"


def dp_iterate(
    operator: DistOperator | Callable,
    projection,
    eta0: Mapping,
    iters: int,
    references: Mapping[str, Mapping] | None = None,
    metrics: Sequence[tuple[str, float]] = (("l", 2.0),),
    pairs: Sequence = (None,),
    keep_iterates: bool = True,
) -> IterateLog:
    """Run ``eta_{k+1} = Proj(T eta_k)`` and log distances to each reference.

    ``projection`` is ``"none"`` (atoms merged at tolerance 1e-12),
    ``("quantile", m)`` or ``("categorical", grid)``. Quantile projection of a
    signed iterate raises, since quantiles of signed measures are undefined.
    ``pairs`` lists where distances are taken (``None`` is the sup over pairs).
    """
    projection = _parse_projection(projection)
    references = dict(references or {})
    eta = dict(eta0)
    log = IterateLog([eta] if keep_iterates else [])

    def record(k, vec):
        for ref_name, ref in references.items():
            for metric, p in metrics:
                for pair in pairs:
                    value = vector_distance(vec, ref, metric, p, pair)
                    log.records.append((k, _metric_name(metric, p, pair), ref_name, value))

    record(0, eta)
    for k in range(1, iters + 1):
        eta = project_vector(operator(eta), projection)
        if keep_iterates:
            log.iterates.append(eta)
        record(k, eta)
    if not keep_iterates:
        log.iterates.append(eta)
    return log


def fixed_point(
    operator: DistOperator | Callable,
    projection,
    eta0: Mapping,
    max_iters: int = 1000,
    tol: float = 1e-10,
) -> tuple[DistVector, int]:
    """Iterate a projected operator until the sup-W_inf step falls below ``tol``."""
    projection = _parse_projection(projection)
    eta = dict(eta0)
    for k in range(1, max_iters + 1):
        nxt = project_vector(operator(eta), projection)
        step = vector_distance(nxt, eta, "w", np.inf) if projection[0] == "quantile" else vector_distance(nxt, eta, "l", 2.0)
        eta = nxt
        if step <= tol:
            return eta, k
    return eta, max_iters


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------


def ground_truth(
    mdp: TabularMDP,
    pi: Policy,
    num_atoms: int = 1000,
    iters: int = 400,
    tol: float = 0.0,
) -> DistVector:
    """Return distributions from quantile-projected one-step DP.

    Starts from Dirac(Q^pi) so the iterates begin near the answer; ``tol`` > 0
    allows an early stop once successive iterates agree in sup-W_inf.
    """
    Q = q_values(mdp, pi)
    op = make_operator("bellman", mdp, pi)
    eta = project_vector(dirac_vector(mdp, Q), ("quantile", num_atoms))
    for _ in range(iters):
        nxt = project_vector(op(eta), ("quantile", num_atoms))
        if tol > 0 and vector_distance(nxt, eta, "w", np.inf) <= tol:
            return nxt
        eta = nxt
    return eta


def q_values(mdp: TabularMDP, pi: Policy) -> np.ndarray:
    """Exact Q^pi by solving the linear Bellman system."""
    S, A = mdp.num_states, mdp.num_actions
    P_pi = np.einsum("xay,yb->xayb", mdp.transition, pi.probs).reshape(S * A, S * A)
    r = mdp.mean_reward.reshape(S * A)
    q = np.linalg.solve(np.eye(S * A) - mdp.gamma * P_pi, r)
    return q.reshape(S, A)


def monte_carlo_returns(mdp: TabularMDP, pi: Policy, x: int, a: int, num: int, rng, precision: float = 1e-8) -> np.ndarray:
    """Sampled discounted returns from (x, a), truncated where gamma^H <= precision."""
    from .mdp import horizon_for_precision, sample_trajectories

    H = horizon_for_precision(mdp.gamma, precision)
    batch = sample_trajectories(mdp, pi, (x, a), H, num, make_rng(rng))
    return batch.rewards @ (mdp.gamma ** np.arange(H))
