"""Finite MDPs, policies, trace coefficients and trajectory sampling.

Everything here is immutable once built: arrays are frozen (``writeable=False``)
so values can be shared freely between operators and worker processes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "TabularMDP",
    "Policy",
    "TraceConfig",
    "Trajectory",
    "TrajectoryBatch",
    "make_rng",
    "spawn_seeds",
    "make_random_mdp",
    "random_deterministic_policy",
    "uniform_policy",
    "mix_policy",
    "is_ratio",
    "trace_coeff",
    "trace_table",
    "trace_mass",
    "sample_trajectory",
    "sample_trajectories",
    "partial_returns",
    "counterexample_mdp",
    "chain3_mdp",
    "save_mdp",
    "load_mdp",
    "format_mdp",
    "parse_mdp",
]

ROW_TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Random numbers
# ---------------------------------------------------------------------------


def make_rng(seed) -> np.random.Generator:
    """Seeded generator; ``seed`` may be an int, a SeedSequence or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    """Split one seed into ``n`` independent child seed sequences."""
    return np.random.SeedSequence(seed).spawn(n)


# ---------------------------------------------------------------------------
# MDP and policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Finite MDP with finitely supported reward distributions.

    ``reward_values``/``reward_probs`` have shape ``(S, A, K)``; pairs with
    fewer than ``K`` reward outcomes are padded with zero-probability entries.
    ``terminal_values`` maps a state to the deterministic value used to
    bootstrap when a trajectory stops there; trajectory sampling ends on
    entering such a state.
    """

    transition: np.ndarray
    reward_values: np.ndarray
    reward_probs: np.ndarray
    gamma: float
    terminal_values: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        P = _frozen(self.transition)
        rv = _frozen(self.reward_values)
        rp = _frozen(self.reward_probs)
        if rv.ndim == 2:
            rv = _frozen(rv[:, :, None])
            rp = _frozen(np.ones_like(rv) if rp.ndim != 3 else rp)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        if rv.shape != rp.shape or rv.shape[:2] != P.shape[:2]:
            raise ValueError("reward arrays must have shape (S, A, K) matching transition")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=-1) - 1.0) > ROW_TOL):
            raise ValueError("transition rows must be non-negative and sum to 1")
        if np.any(rp < 0) or np.any(np.abs(rp.sum(axis=-1) - 1.0) > ROW_TOL):
            raise ValueError("reward probabilities must be non-negative and sum to 1")
        if not np.all(np.isfinite(rv)):
            raise ValueError("reward values must be finite")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        for s in self.terminal_values:
            if not 0 <= s < P.shape[0]:
                raise ValueError(f"terminal state {s} out of range")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward_values", rv)
        object.__setattr__(self, "reward_probs", rp)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(
            self, "terminal_values", {int(k): float(v) for k, v in self.terminal_values.items()}
        )

    @classmethod
    def deterministic(cls, rewards, transition, gamma, terminal_values=None) -> "TabularMDP":
        rewards = np.asarray(rewards, dtype=float)
        return cls(
            transition=transition,
            reward_values=rewards[:, :, None],
            reward_probs=np.ones_like(rewards)[:, :, None],
            gamma=gamma,
            terminal_values=terminal_values or {},
        )

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def num_pairs(self) -> int:
        return self.num_states * self.num_actions

    def pairs(self) -> list[tuple[int, int]]:
        return [(x, a) for x in range(self.num_states) for a in range(self.num_actions)]

    def reward(self, x: int, a: int) -> list[tuple[float, float]]:
        """Support of R(x, a) as (value, prob) pairs, zero-probability padding dropped."""
        vals, probs = self.reward_values[x, a], self.reward_probs[x, a]
        return [(float(v), float(p)) for v, p in zip(vals, probs) if p > 0]

    @property
    def mean_reward(self) -> np.ndarray:
        return (self.reward_values * self.reward_probs).sum(axis=-1)

    @property
    def reward_bound(self) -> float:
        mask = self.reward_probs > 0
        return float(np.max(np.abs(self.reward_values[mask]))) if mask.any() else 0.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, TabularMDP):
            return NotImplemented
        return (
            np.array_equal(self.transition, other.transition)
            and np.array_equal(self.reward_values, other.reward_values)
            and np.array_equal(self.reward_probs, other.reward_probs)
            and self.gamma == other.gamma
            and dict(self.terminal_values) == dict(other.terminal_values)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class Policy:
    """Stochastic policy as an ``(S, A)`` row-stochastic matrix."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 2:
            raise ValueError(f"policy probs must be 2-D, got shape {p.shape}")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValueError("policy rows must be non-negative and sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape  # type: ignore[return-value]

    def __call__(self, a: int, x: int) -> float:
        return float(self.probs[x, a])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Policy):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    __hash__ = None  # type: ignore[assignment]


def uniform_policy(num_states: int, num_actions: int) -> Policy:
    return Policy(np.full((num_states, num_actions), 1.0 / num_actions))


def random_deterministic_policy(num_states: int, num_actions: int, rng) -> Policy:
    rng = make_rng(rng)
    probs = np.zeros((num_states, num_actions))
    probs[np.arange(num_states), rng.integers(num_actions, size=num_states)] = 1.0
    return Policy(probs)


def mix_policy(pi_d: Policy, mu: Policy, epsilon: float, convention: str = "main") -> Policy:
    """Row-wise mixture controlling off-policyness.

    ``convention="main"`` gives ``(1 - eps) * mu + eps * pi_d`` (eps=0 is on-policy);
    ``convention="appendix"`` gives the reversed ``(1 - eps) * pi_d + eps * mu``.
    """
    if pi_d.shape != mu.shape:
        raise ValueError(f"policy shapes differ: {pi_d.shape} vs {mu.shape}")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if convention == "main":
        lo, hi = mu.probs, pi_d.probs
    elif convention == "appendix":
        lo, hi = pi_d.probs, mu.probs
    else:
        raise ValueError(f"unknown mixture convention {convention!r}")
    if epsilon == 0.0:
        return Policy(lo)
    if epsilon == 1.0:
        return Policy(hi)
    mixed = (1.0 - epsilon) * lo + epsilon * hi
    return Policy(mixed / mixed.sum(axis=1, keepdims=True))


def is_ratio(pi: Policy, mu: Policy, x: int, a: int) -> float:
    p, q = pi.probs[x, a], mu.probs[x, a]
    if q == 0.0:
        if p > 0.0:
            raise ValueError(f"support violation at ({x}, {a}): mu=0 while pi={p}")
        return 0.0
    return float(p / q)


# ---------------------------------------------------------------------------
# Trace coefficients
# ---------------------------------------------------------------------------

_TRACE_KINDS = ("constant", "clipped_is", "clipped_is_lambda", "full_is", "truncated_is")


@dataclass(frozen=True)
class TraceConfig:
    """Trace-coefficient family plus truncation horizon.

    ``horizon`` is the last step whose coefficient may be non-zero: the
    truncated operator sums TD errors for ``t = 0..horizon`` and therefore
    bootstraps at depths ``1..horizon + 1``.
    """

    kind: str
    lam: float = 1.0
    c_bar: float = 1.0
    n: int | None = None
    horizon: int = 8

    def __post_init__(self):
        if self.kind not in _TRACE_KINDS:
            raise ValueError(f"unknown trace kind {self.kind!r}; expected one of {_TRACE_KINDS}")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.kind == "truncated_is" and (self.n is None or self.n < 1):
            raise ValueError("truncated_is needs n >= 1")
        if self.lam < 0 or self.c_bar < 0:
            raise ValueError("lambda and c_bar must be non-negative")

    @classmethod
    def constant(cls, lam: float, horizon: int = 8) -> "TraceConfig":
        return cls("constant", lam=lam, horizon=horizon)

    @classmethod
    def clipped_is(cls, c_bar: float, horizon: int = 8) -> "TraceConfig":
        return cls("clipped_is", c_bar=c_bar, horizon=horizon)

    @classmethod
    def clipped_is_lambda(cls, lam: float, c_bar: float, horizon: int = 8) -> "TraceConfig":
        return cls("clipped_is_lambda", lam=lam, c_bar=c_bar, horizon=horizon)

    @classmethod
    def full_is(cls, horizon: int = 8) -> "TraceConfig":
        return cls("full_is", horizon=horizon)

    @classmethod
    def truncated_is(cls, n: int, horizon: int | None = None) -> "TraceConfig":
        # c_t vanishes from t = n on, so a horizon beyond n - 1 adds nothing.
        return cls("truncated_is", n=n, horizon=n - 1 if horizon is None else horizon)

    @property
    def claims_retrace(self) -> bool:
        """Whether c_t <= rho_t holds for every policy pair (not just on-policy)."""
        if self.kind == "constant":
            return self.lam == 0.0
        if self.kind == "clipped_is_lambda":
            return self.lam <= 1.0
        return True

    def with_horizon(self, horizon: int) -> "TraceConfig":
        return TraceConfig(self.kind, self.lam, self.c_bar, self.n, horizon)


def trace_coeff(cfg: TraceConfig, rho_t: float, t: int) -> float:
    """Coefficient c_t for a step with IS ratio ``rho_t`` (t >= 1)."""
    if t < 1:
        raise ValueError("trace coefficients start at t = 1 (c_{1:0} = 1 by convention)")
    if t > cfg.horizon:
        return 0.0
    kind = cfg.kind
    if kind == "constant":
        return float(cfg.lam)
    if kind == "clipped_is":
        return float(min(rho_t, cfg.c_bar))
    if kind == "clipped_is_lambda":
        return float(cfg.lam * min(rho_t, cfg.c_bar))
    if kind == "full_is":
        return float(rho_t)
    return float(rho_t) if t < cfg.n else 0.0


def trace_table(cfg: TraceConfig, pi: Policy, mu: Policy, t: int) -> np.ndarray:
    """``(S, A)`` array of c_t(y, b); entries with mu(b|y) = 0 are set to 0.

    Those entries only ever appear multiplied by mu(b|y), so their value is
    immaterial; zero keeps the products finite.
    """
    pp, mp = pi.probs, mu.probs
    rho = np.divide(pp, mp, out=np.zeros_like(pp), where=mp > 0)
    if t > cfg.horizon:
        return np.zeros_like(rho)
    kind = cfg.kind
    if kind == "constant":
        c = np.full_like(rho, cfg.lam)
    elif kind == "clipped_is":
        c = np.minimum(rho, cfg.c_bar)
    elif kind == "clipped_is_lambda":
        c = cfg.lam * np.minimum(rho, cfg.c_bar)
    elif kind == "full_is":
        c = rho
    else:
        c = rho if t < cfg.n else np.zeros_like(rho)
    return np.where(mp > 0, c, 0.0)


def trace_mass(cfg: TraceConfig, pi: Policy, mu: Policy, t: int) -> np.ndarray:
    """``(S, A)`` array of c_t(y, b) * mu(b|y), formed without dividing by mu.

    ``min(pi, c_bar * mu)`` instead of ``min(pi / mu, c_bar) * mu`` keeps
    ``pi - c_t mu`` exactly non-negative in floating point for IS-based traces.
    """
    pp, mp = pi.probs, mu.probs
    if t > cfg.horizon:
        return np.zeros_like(pp)
    kind = cfg.kind
    if kind == "constant":
        return cfg.lam * mp
    if kind == "clipped_is":
        return np.minimum(pp, cfg.c_bar * mp)
    if kind == "clipped_is_lambda":
        return cfg.lam * np.minimum(pp, cfg.c_bar * mp)
    if kind == "full_is":
        return pp.copy()
    return pp.copy() if t < cfg.n else np.zeros_like(pp)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One behaviour-policy rollout starting from a forced pair.

    Step ``t`` is the transition ``(states[t], actions[t], rewards[t],
    states[t + 1])``; ``rho[t]`` is the IS ratio of ``(states[t], actions[t])``
    (``rho[0]`` is stored but never used, the first action is given).
    ``terminated`` is true when ``states[-1]`` is a terminal state.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    rho: np.ndarray
    terminated: bool = False

    def __post_init__(self):
        for name in ("states", "actions"):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype=np.int64))
        for name in ("rewards", "rho"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if len(self.states) != len(self.actions) + 1:
            raise ValueError("need one more state than actions")
        # rho = 0 is allowed: the target never takes that action and the trace cuts
        if np.any(~np.isfinite(self.rho)) or np.any(self.rho < 0):
            raise ValueError("IS ratios along a trajectory must be finite and non-negative")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def start(self) -> tuple[int, int]:
        return int(self.states[0]), int(self.actions[0])

    def transitions(self) -> list[tuple[int, int, float, int]]:
        return [
            (int(self.states[t]), int(self.actions[t]), float(self.rewards[t]), int(self.states[t + 1]))
            for t in range(len(self))
        ]

    def partial_return(self, t0: int, t1: int, gamma: float) -> float:
        """G_{t0:t1} = sum_{s=t0}^{t1} gamma^(s - t0) R_s (0 when t1 < t0)."""
        if t1 < t0:
            return 0.0
        r = self.rewards[t0 : t1 + 1]
        return float(np.sum(r * gamma ** np.arange(len(r))))


def partial_returns(traj: Trajectory, gamma: float) -> np.ndarray:
    """``G[t] = G_{0:t-1}`` for ``t = 0..len(traj)`` (``G[0] = 0``)."""
    disc = gamma ** np.arange(len(traj))
    return np.concatenate([[0.0], np.cumsum(disc * traj.rewards)])


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """``N`` fixed-length rollouts stored as arrays (no terminal states)."""

    states: np.ndarray  # (N, T + 1)
    actions: np.ndarray  # (N, T)
    rewards: np.ndarray  # (N, T)
    rho: np.ndarray  # (N, T)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def length(self) -> int:
        return self.actions.shape[1]

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(self.states[i], self.actions[i], self.rewards[i], self.rho[i])


def _sample_reward(mdp: TabularMDP, x, a, rng) -> np.ndarray:
    probs = mdp.reward_probs[x, a]
    vals = mdp.reward_values[x, a]
    if mdp.reward_values.shape[-1] == 1:
        return vals[..., 0]
    cum = np.cumsum(probs, axis=-1)
    u = rng.random(np.shape(x))[..., None]
    k = np.minimum((u >= cum).sum(axis=-1), probs.shape[-1] - 1)
    return np.take_along_axis(vals, k[..., None], axis=-1)[..., 0]


def _sample_categorical(probs: np.ndarray, rng) -> np.ndarray:
    cum = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1])[..., None]
    return np.minimum((u >= cum).sum(axis=-1), probs.shape[-1] - 1)


def sample_trajectory(
    mdp: TabularMDP,
    behavior: Policy,
    start: tuple[int, int],
    max_len: int,
    rng,
    target: Policy | None = None,
) -> Trajectory:
    """Roll out ``behavior`` from the forced ``start`` pair.

    Stops after ``max_len`` transitions or on entering a terminal state. IS
    ratios are taken against ``target`` (``None`` means on-policy, rho = 1).
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    rng = make_rng(rng)
    x, a = start
    states, actions, rewards, rhos = [x], [], [], []
    terminated = False
    for t in range(max_len):
        if t > 0:
            a = int(_sample_categorical(behavior.probs[x], rng))
        rho = 1.0 if target is None else is_ratio(target, behavior, x, a)
        r = float(_sample_reward(mdp, x, a, rng))
        x_next = int(_sample_categorical(mdp.transition[x, a], rng))
        actions.append(a)
        rewards.append(r)
        rhos.append(rho)
        states.append(x_next)
        x = x_next
        if x in mdp.terminal_values:
            terminated = True
            break
    return Trajectory(np.array(states), np.array(actions), np.array(rewards), np.array(rhos), terminated)


def sample_trajectories(
    mdp: TabularMDP,
    behavior: Policy,
    start: tuple[int, int],
    length: int,
    num: int,
    rng,
    target: Policy | None = None,
) -> TrajectoryBatch:
    """Vectorised fixed-length rollouts; terminal states are ignored."""
    rng = make_rng(rng)
    states = np.empty((num, length + 1), dtype=np.int64)
    actions = np.empty((num, length), dtype=np.int64)
    rewards = np.empty((num, length))
    x = np.full(num, start[0], dtype=np.int64)
    a = np.full(num, start[1], dtype=np.int64)
    states[:, 0] = x
    for t in range(length):
        if t > 0:
            a = _sample_categorical(behavior.probs[x], rng)
        actions[:, t] = a
        rewards[:, t] = _sample_reward(mdp, x, a, rng)
        x = _sample_categorical(mdp.transition[x, a], rng)
        states[:, t + 1] = x
    if target is None:
        rho = np.ones((num, length))
    else:
        mp = behavior.probs[states[:, :-1], actions]
        pp = target.probs[states[:, :-1], actions]
        if np.any((mp == 0) & (pp > 0)):
            raise ValueError("support violation: target acts where behaviour never does")
        rho = pp / mp
    return TrajectoryBatch(states, actions, rewards, rho)


# ---------------------------------------------------------------------------
# Generators and built-in examples
# ---------------------------------------------------------------------------


def make_random_mdp(
    seed,
    num_states: int = 3,
    num_actions: int = 2,
    dirichlet_conc: float = 0.5,
    gamma: float = 0.9,
) -> TabularMDP:
    """Standard-normal deterministic rewards and Dirichlet(conc) transition rows."""
    if num_states < 1 or num_actions < 1:
        raise ValueError("need at least one state and one action")
    if dirichlet_conc <= 0:
        raise ValueError("dirichlet concentration must be positive")
    rng = make_rng(seed)
    rewards = rng.standard_normal((num_states, num_actions))
    P = rng.dirichlet(np.full(num_states, float(dirichlet_conc)), size=(num_states, num_actions))
    P = P / P.sum(axis=-1, keepdims=True)
    return TabularMDP.deterministic(rewards, P, gamma)


def counterexample_mdp(reward: float = 1.0, gamma: float = 0.5) -> TabularMDP:
    """One state, one action, deterministic reward, self loop."""
    return TabularMDP.deterministic([[reward]], [[[1.0]]], gamma)


def chain3_mdp(gamma: float = 0.5, terminal_value: float = 1.0) -> TabularMDP:
    """Deterministic chain 0 -> 1 -> 2 with zero rewards; state 2 is terminal."""
    P = np.zeros((3, 1, 3))
    P[0, 0, 1] = P[1, 0, 2] = P[2, 0, 2] = 1.0
    return TabularMDP.deterministic(np.zeros((3, 1)), P, gamma, terminal_values={2: terminal_value})


# ---------------------------------------------------------------------------
# Plain-text format
# ---------------------------------------------------------------------------
#
#   distretrace-mdp 1
#   states <S>
#   actions <A>
#   gamma <g>
#   terminal <x> <value>            (zero or more)
#   reward <x> <a> <v>:<p> ...      (one row per pair)
#   transition <x> <a> <p_0> ... <p_{S-1}>
#
# Floats are written with repr() so a round trip is exact.


def format_mdp(mdp: TabularMDP) -> str:
    lines = [
        "distretrace-mdp 1",
        f"states {mdp.num_states}",
        f"actions {mdp.num_actions}",
        f"gamma {mdp.gamma!r}",
    ]
    for s, v in sorted(mdp.terminal_values.items()):
        lines.append(f"terminal {s} {v!r}")
    for x, a in mdp.pairs():
        atoms = " ".join(f"{v!r}:{p!r}" for v, p in mdp.reward(x, a))
        lines.append(f"reward {x} {a} {atoms}")
    for x, a in mdp.pairs():
        row = " ".join(repr(float(p)) for p in mdp.transition[x, a])
        lines.append(f"transition {x} {a} {row}")
    return "\n".join(lines) + "\n"


def parse_mdp(text: str) -> TabularMDP:
    S = A = None
    gamma = None
    terminal: dict[int, float] = {}
    rewards: dict[tuple[int, int], list[tuple[float, float]]] = {}
    trans: dict[tuple[int, int], list[float]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        try:
            if key == "distretrace-mdp":
                if rest != ["1"]:
                    raise ValueError(f"unsupported format version {rest}")
            elif key == "states":
                S = int(rest[0])
            elif key == "actions":
                A = int(rest[0])
            elif key == "gamma":
                gamma = float(rest[0])
            elif key == "terminal":
                terminal[int(rest[0])] = float(rest[1])
            elif key == "reward":
                x, a = int(rest[0]), int(rest[1])
                rewards[(x, a)] = [tuple(map(float, tok.split(":"))) for tok in rest[2:]]  # type: ignore[misc]
            elif key == "transition":
                trans[(int(rest[0]), int(rest[1]))] = [float(t) for t in rest[2:]]
            else:
                raise ValueError(f"unknown key {key!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    if S is None or A is None or gamma is None:
        raise ValueError("header must define states, actions and gamma")
    K = max((len(v) for v in rewards.values()), default=1)
    rv = np.zeros((S, A, K))
    rp = np.zeros((S, A, K))
    P = np.zeros((S, A, S))
    for x in range(S):
        for a in range(A):
            if (x, a) not in rewards or (x, a) not in trans:
                raise ValueError(f"missing reward or transition row for pair ({x}, {a})")
            atoms = rewards[(x, a)]
            rv[x, a, : len(atoms)] = [v for v, _ in atoms]
            rp[x, a, : len(atoms)] = [p for _, p in atoms]
            if len(trans[(x, a)]) != S:
                raise ValueError(f"transition row ({x}, {a}) has wrong length")
            P[x, a] = trans[(x, a)]
    return TabularMDP(P, rv, rp, gamma, terminal)


def save_mdp(mdp: TabularMDP, path) -> None:
    Path(path).write_text(format_mdp(mdp), encoding="utf-8")


def load_mdp(path) -> TabularMDP:
    return parse_mdp(Path(path).read_text(encoding="utf-8"))


def policy_from_rows(rows: Sequence[Sequence[float]]) -> Policy:
    return Policy(np.asarray(rows, dtype=float))


def horizon_for_precision(gamma: float, precision: float = 1e-8) -> int:
    """Smallest horizon H with gamma**H <= precision."""
    if gamma == 0:
        return 1
    return int(math.ceil(math.log(precision) / math.log(gamma)))
