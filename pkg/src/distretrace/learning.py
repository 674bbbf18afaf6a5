"""Sample-based learning: QR and CE losses, the stochastic Retrace estimators,
tabular QR-Retrace and forward/backward-view episode updates.

The stochastic estimate of a loss against the Retrace target is the loss
against a *signed* sampled target

    eta(x0,a0) + sum_t c_{1:t} [ (b_{G_{0:t}, gamma^{t+1}})# eta(X_{t+1}, pi)
                                 - (b_{G_{0:t-1}, gamma^t})# eta(X_t, A_t) ],

and both losses are linear in their measure argument, so the estimate can be
formed either per term or on the signed target directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .mdp import Policy, TabularMDP, TraceConfig, Trajectory, TrajectoryBatch, make_rng, sample_trajectories, trace_coeff
from .measures import DiracMixture, combine, dirac, pushforward
from .representations import categorical_split, quantile_levels

__all__ = [
    "qr_loss",
    "qr_loss_grad",
    "sampled_target",
    "trace_products",
    "stochastic_qr_loss",
    "stochastic_qr_grad",
    "stochastic_qr_batch",
    "ce_loss",
    "ce_logit_grad",
    "softmax",
    "stochastic_ce_loss",
    "stochastic_ce_batch",
    "quantile_table_vector",
    "qr_retrace_epoch",
    "step_size",
    "TraceState",
    "forward_view_episode",
    "backward_view_episode",
    "value_forward_episode",
    "value_backward_episode",
    "learning_curve_csv",
    "run_qr_retrace",
]


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def qr_loss(theta, tau, m: DiracMixture):
    """sum_i w_i f_tau(z_i - theta) with f_tau(u) = u (tau - 1[u < 0]).

    ``theta`` and ``tau`` broadcast together; signed measures are allowed.
    """
    theta = np.asarray(theta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    u = m.locs - theta[..., None]
    out = (m.weights * u * (tau[..., None] - (u < 0))).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def qr_loss_grad(theta, tau, m: DiracMixture):
    """d/dtheta of :func:`qr_loss`: sum_i w_i (1[z_i < theta] - tau)."""
    theta = np.asarray(theta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    below = m.locs < theta[..., None]
    out = (m.weights * (below - tau[..., None])).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def ce_loss(probs, m: DiracMixture, grid) -> float:
    """Cross-entropy -sum_i p_i log q_i with p = Pi_C(m) on ``grid`` and q = ``probs``.

    Linear in ``m``, so signed targets are fine. A zero-probability bin that
    receives target mass makes the loss infinite and raises.
    """
    q = np.asarray(probs, dtype=float)
    p = categorical_split(m.locs, m.weights, grid)
    return _cross_entropy(p, q)


def _cross_entropy(p: np.ndarray, q: np.ndarray) -> float:
    hit = p != 0
    if np.any(q[hit] <= 0):
        raise ValueError("target mass on a zero-probability bin: cross-entropy is infinite")
    return float(-(p[hit] * np.log(q[hit])).sum())


def ce_logit_grad(logits, target_probs) -> np.ndarray:
    """Gradient of CE(p | softmax(w)) with respect to the logits w: q * sum(p) - p."""
    q = softmax(logits)
    p = np.asarray(target_probs, dtype=float)
    return q * p.sum(axis=-1, keepdims=True) - p


# ---------------------------------------------------------------------------
# Sampled targets
# ---------------------------------------------------------------------------


def _bootstrap(eta: Mapping, mdp: TabularMDP, pi: Policy, y: int) -> DiracMixture:
    """eta(y, A^pi); terminal states bootstrap from a Dirac at their value."""
    if y in mdp.terminal_values:
        return dirac(mdp.terminal_values[y])
    return combine((pi.probs[y, b], eta[(y, b)]) for b in range(mdp.num_actions) if pi.probs[y, b] > 0)


def trace_products(traj: Trajectory, trace: TraceConfig) -> np.ndarray:
    """``c[t] = c_1 * ... * c_t`` for t = 0..len(traj) - 1 (``c[0] = 1``)."""
    T = len(traj)
    c = np.ones(T)
    for t in range(1, T):
        c[t] = c[t - 1] * trace_coeff(trace, float(traj.rho[t]), t)
    return c


def _required_length(trace: TraceConfig) -> int:
    return trace.horizon + 1


def sampled_target(traj: Trajectory, eta: Mapping, mdp: TabularMDP, pi: Policy, trace: TraceConfig) -> DiracMixture:
    """The signed sampled Retrace target built from one trajectory.

    The trajectory must cover every step with a possibly non-zero trace, i.e.
    ``trace.horizon + 1`` transitions, unless it ends in a terminal state.
    """
    T = len(traj)
    if T < _required_length(trace) and not traj.terminated:
        raise ValueError(f"trajectory of length {T} is shorter than the trace horizon + 1 = {_required_length(trace)}")
    gamma = mdp.gamma
    c = trace_products(traj, trace)
    x0, a0 = traj.start
    terms = [(1.0, eta[(x0, a0)])]
    G = 0.0
    for t in range(T):
        if c[t] == 0.0:
            break
        x, a, r, y = int(traj.states[t]), int(traj.actions[t]), float(traj.rewards[t]), int(traj.states[t + 1])
        G_next = G + gamma**t * r
        terms.append((c[t], pushforward(_bootstrap(eta, mdp, pi, y), G_next, gamma ** (t + 1))))
        terms.append((-c[t], pushforward(eta[(x, a)], G, gamma**t)))
        G = G_next
    return combine(terms)


def stochastic_qr_loss(traj, eta, mdp, pi, trace, theta, tau):
    """Single-trajectory estimate of the QR loss against the Retrace target."""
    return qr_loss(theta, tau, sampled_target(traj, eta, mdp, pi, trace))


def stochastic_qr_grad(traj, eta, mdp, pi, trace, theta, tau):
    return qr_loss_grad(theta, tau, sampled_target(traj, eta, mdp, pi, trace))


# ---------------------------------------------------------------------------
# Batched estimators
# ---------------------------------------------------------------------------


def _pad_vector(eta: Mapping, mdp: TabularMDP, pi: Policy):
    """Padded atom arrays for eta(x, a) and for the bootstrap eta(y, A^pi)."""
    S, A = mdp.num_states, mdp.num_actions
    M = max(len(eta[k]) for k in mdp.pairs())
    pair_locs = np.zeros((S, A, M))
    pair_w = np.zeros((S, A, M))
    for (x, a) in mdp.pairs():
        m = eta[(x, a)]
        pair_locs[x, a, : len(m)] = m.locs
        pair_w[x, a, : len(m)] = m.weights
    boot_locs = pair_locs.reshape(S, A * M).copy()
    boot_w = (pi.probs[:, :, None] * pair_w).reshape(S, A * M)
    for y, v in mdp.terminal_values.items():
        boot_locs[y] = 0.0
        boot_w[y] = 0.0
        boot_locs[y, 0] = v
        boot_w[y, 0] = 1.0
    return pair_locs, pair_w, boot_locs, boot_w


def _batch_terms(batch: TrajectoryBatch, eta, mdp, pi, trace):
    """Yield (coef[N], locs[N, K], weights[N, K]) for every term of the sampled target."""
    N, T = len(batch), batch.length
    if T < _required_length(trace):
        raise ValueError(f"trajectories of length {T} are shorter than the trace horizon + 1")
    gamma = mdp.gamma
    pair_locs, pair_w, boot_locs, boot_w = _pad_vector(eta, mdp, pi)
    x0, a0 = batch.states[:, 0], batch.actions[:, 0]
    yield np.ones(N), pair_locs[x0, a0], pair_w[x0, a0]
    c = np.ones(N)
    G = np.zeros(N)
    for t in range(T):
        if t >= 1:
            c = c * _coeffs(trace, batch.rho[:, t], t)
        if not np.any(c):
            break
        x, a, y = batch.states[:, t], batch.actions[:, t], batch.states[:, t + 1]
        G_next = G + gamma**t * batch.rewards[:, t]
        yield c, G_next[:, None] + gamma ** (t + 1) * boot_locs[y], boot_w[y]
        yield -c, G[:, None] + gamma**t * pair_locs[x, a], pair_w[x, a]
        G = G_next


def _coeffs(trace: TraceConfig, rho: np.ndarray, t: int) -> np.ndarray:
    """Vectorised :func:`trace_coeff`."""
    if t > trace.horizon:
        return np.zeros_like(rho)
    kind = trace.kind
    if kind == "constant":
        return np.full_like(rho, trace.lam)
    if kind == "clipped_is":
        return np.minimum(rho, trace.c_bar)
    if kind == "clipped_is_lambda":
        return trace.lam * np.minimum(rho, trace.c_bar)
    if kind == "full_is":
        return rho.copy()
    return rho.copy() if t < trace.n else np.zeros_like(rho)


def stochastic_qr_batch(batch: TrajectoryBatch, eta, mdp, pi, trace, theta, tau):
    """Per-trajectory QR loss and gradient estimates, each of shape (N,) + theta.shape."""
    theta = np.asarray(theta, dtype=float)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), theta.shape)
    th = theta.ravel()
    ta = tau.ravel()
    N = len(batch)
    loss = np.zeros((N, th.size))
    grad = np.zeros((N, th.size))
    for coef, locs, w in _batch_terms(batch, eta, mdp, pi, trace):
        u = locs[:, :, None] - th[None, None, :]  # (N, K, m)
        neg = u < 0
        cw = (coef[:, None] * w)[:, :, None]
        loss += (cw * u * (ta - neg)).sum(axis=1)
        grad += (cw * (neg - ta)).sum(axis=1)
    shape = (N,) + theta.shape
    return loss.reshape(shape), grad.reshape(shape)


def stochastic_ce_loss(traj, eta, mdp, pi, trace, probs, grid) -> float:
    """Single-trajectory CE estimate; every pushforward term is projected onto ``grid`` first."""
    return ce_loss(probs, sampled_target(traj, eta, mdp, pi, trace), grid)


def _split_rows(locs: np.ndarray, weights: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Row-wise :func:`categorical_split` for (N, K) atom arrays."""
    N, K = locs.shape
    z = np.clip(locs, grid[0], grid[-1]).ravel()
    w = weights.ravel()
    k = np.clip(np.searchsorted(grid, z, side="right") - 1, 0, grid.size - 2)
    frac_hi = (z - grid[k]) / (grid[k + 1] - grid[k])
    rows = np.repeat(np.arange(N), K)
    out = np.zeros((N, grid.size))
    np.add.at(out, (rows, k), w * (1.0 - frac_hi))
    np.add.at(out, (rows, k + 1), w * frac_hi)
    return out


def stochastic_ce_batch(batch: TrajectoryBatch, eta, mdp, pi, trace, probs, grid):
    """Per-trajectory CE estimates (N,) and the projected signed targets (N, len(grid))."""
    grid = np.asarray(grid, dtype=float)
    targets = np.zeros((len(batch), grid.size))
    for coef, locs, w in _batch_terms(batch, eta, mdp, pi, trace):
        targets += _split_rows(locs, coef[:, None] * w, grid)
    q = np.asarray(probs, dtype=float)
    if np.any((targets != 0) & (q[None, :] <= 0)):
        raise ValueError("target mass on a zero-probability bin: cross-entropy is infinite")
    logq = np.log(np.where(q > 0, q, 1.0))
    return -(targets * logq).sum(axis=1), targets


# ---------------------------------------------------------------------------
# Tabular QR-Retrace
# ---------------------------------------------------------------------------


def quantile_table_vector(table) -> dict:
    """(S, A, m) location array -> DistVector of equally weighted atoms."""
    from .operators import quantile_vector

    return quantile_vector(table)


def step_size(alpha0: float, k: int, K: float = 100.0) -> float:
    """Decaying schedule alpha_k = alpha0 / (1 + k / K)."""
    return alpha0 / (1.0 + k / K)


def qr_retrace_epoch(table, mdp: TabularMDP, pi: Policy, mu: Policy, trace: TraceConfig, alpha: float, num_trajectories: int, rng) -> np.ndarray:
    """One synchronous epoch of tabular QR-Retrace.

    Every pair draws ``num_trajectories`` behaviour rollouts, all m quantiles
    take a step along the mean stochastic gradient (bootstrapping from the
    table as it was at the start of the epoch), and entries are re-sorted.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    table = np.asarray(table, dtype=float)
    new = table.copy()
    if alpha == 0:
        return new
    rng = make_rng(rng)
    eta = quantile_table_vector(table)
    taus = quantile_levels(table.shape[-1])
    length = _required_length(trace)
    for x, a in mdp.pairs():
        batch = sample_trajectories(mdp, mu, (x, a), length, num_trajectories, rng, target=pi)
        _, grad = stochastic_qr_batch(batch, eta, mdp, pi, trace, table[x, a], taus)
        new[x, a] -= alpha * grad.mean(axis=0)
    return np.sort(new, axis=-1)


def run_qr_retrace(
    mdp: TabularMDP,
    pi: Policy,
    mu: Policy,
    trace: TraceConfig,
    init,
    epochs: int,
    alpha0: float,
    num_trajectories: int,
    seed,
    K: float = 100.0,
    callback=None,
) -> np.ndarray:
    """Run ``epochs`` epochs with the decaying schedule; ``callback(k, table)`` after each."""
    rng = make_rng(seed)
    table = np.sort(np.asarray(init, dtype=float), axis=-1)
    for k in range(epochs):
        table = qr_retrace_epoch(table, mdp, pi, mu, trace, step_size(alpha0, k, K), num_trajectories, rng)
        if callback is not None:
            callback(k, table)
    return table


# ---------------------------------------------------------------------------
# Forward and backward views (on-policy, c_t = lambda)
# ---------------------------------------------------------------------------


def _suffix(traj: Trajectory, s: int) -> Trajectory:
    return Trajectory(traj.states[s:], traj.actions[s:], traj.rewards[s:], traj.rho[s:], traj.terminated)


def forward_view_episode(table, traj: Trajectory, lam: float, alpha: float, mdp: TabularMDP, pi: Policy, horizon: int | None = None) -> np.ndarray:
    """One QR step per visit against that visit's lambda-Retrace target.

    Targets bootstrap from the table as it was when the episode started; the
    step for each visit is applied immediately. ``horizon`` caps how many
    steps a target looks ahead (default: to the end of the episode).
    """
    z = np.array(table, dtype=float)
    eta0 = quantile_table_vector(z)
    taus = quantile_levels(z.shape[-1])
    T = len(traj)
    for s in range(T):
        rest = T - s
        h = rest - 1 if horizon is None else min(horizon, rest - 1)
        target = sampled_target(_suffix(traj, s), eta0, mdp, pi, TraceConfig.constant(lam, horizon=h))
        x, a = int(traj.states[s]), int(traj.actions[s])
        z[x, a] -= alpha * qr_loss_grad(z[x, a], taus, target)
    return z


@dataclass
class _Anchor:
    start: int
    pair: tuple[int, int]
    partial_return: float  # G_{start:t-1}
    eligibility: float  # lambda^(t - start)


@dataclass
class TraceState:
    """Anchors of past predictions kept by the backward view."""

    anchors: list = field(default_factory=list)
    peak: int = 0

    def add(self, anchor: _Anchor) -> None:
        self.anchors.append(anchor)
        self.peak = max(self.peak, len(self.anchors))

    def __len__(self) -> int:
        return len(self.anchors)


def backward_view_episode(
    table,
    traj: Trajectory,
    lam: float,
    alpha: float,
    mdp: TabularMDP,
    pi: Policy,
    state: TraceState | None = None,
) -> np.ndarray:
    """Online backward-view update with partial-return traces.

    At step t every anchor s <= t steps along
    e_{s,t} grad L((b_{G_{s:t}, gamma^{t+1-s}})# eta(X_{t+1}, pi) - (b_{G_{s:t-1}, gamma^{t-s}})# eta(X_t, A_t)),
    except at t = s where only the first term is kept (the second cancels
    the anchor's own prediction). TD measures come from the table as it was
    at the start of step t; the loss is evaluated at the current parameters.
    Partial returns follow G_{s:t} = G_{s:t-1} + gamma^{t-s} R_t.
    """
    z = np.array(table, dtype=float)
    taus = quantile_levels(z.shape[-1])
    gamma = mdp.gamma
    state = TraceState() if state is None else state
    for t in range(len(traj)):
        snap = quantile_table_vector(z)
        x, a, r, y = int(traj.states[t]), int(traj.actions[t]), float(traj.rewards[t]), int(traj.states[t + 1])
        boot = _bootstrap(snap, mdp, pi, y)
        state.add(_Anchor(t, (x, a), 0.0, 1.0))
        for anchor in state.anchors:
            k = t - anchor.start
            G_new = anchor.partial_return + gamma**k * r
            plus = pushforward(boot, G_new, gamma ** (k + 1))
            if k == 0:
                target = plus
            else:
                target = combine([(1.0, plus), (-1.0, pushforward(snap[(x, a)], anchor.partial_return, gamma**k))])
            ax, aa = anchor.pair
            z[ax, aa] -= alpha * anchor.eligibility * qr_loss_grad(z[ax, aa], taus, target)
            anchor.partial_return = G_new
            anchor.eligibility *= lam
        state.anchors = [an for an in state.anchors if an.eligibility > 0]
    return z


def _value_next(Q, mdp: TabularMDP, pi: Policy, y: int) -> float:
    if y in mdp.terminal_values:
        return float(mdp.terminal_values[y])
    return float(pi.probs[y] @ Q[y])


def value_forward_episode(Q, traj: Trajectory, lam: float, alpha: float, mdp: TabularMDP, pi: Policy) -> np.ndarray:
    """Q(x_s, a_s) += alpha (G^lambda_s - Q(x_s, a_s)) with lambda-returns from the start-of-episode table."""
    Q0 = np.array(Q, dtype=float)
    Q = Q0.copy()
    T = len(traj)
    deltas = np.array([
        traj.rewards[t] + mdp.gamma * _value_next(Q0, mdp, pi, int(traj.states[t + 1])) - Q0[traj.states[t], traj.actions[t]]
        for t in range(T)
    ])
    for s in range(T):
        x, a = int(traj.states[s]), int(traj.actions[s])
        lam_return = Q0[x, a] + np.sum((mdp.gamma * lam) ** np.arange(T - s) * deltas[s:])
        Q[x, a] += alpha * (lam_return - Q[x, a])
    return Q


def value_backward_episode(Q, traj: Trajectory, lam: float, alpha: float, mdp: TabularMDP, pi: Policy, traces_out: list | None = None) -> np.ndarray:
    """Classic eligibility traces: e <- gamma lambda e + 1[pair]; Q += alpha e delta_t.

    ``traces_out``, when given, receives a copy of the trace table after each step.
    """
    Q = np.array(Q, dtype=float)
    e = np.zeros_like(Q)
    for t in range(len(traj)):
        x, a, y = int(traj.states[t]), int(traj.actions[t]), int(traj.states[t + 1])
        delta = traj.rewards[t] + mdp.gamma * _value_next(Q, mdp, pi, y) - Q[x, a]
        e *= mdp.gamma * lam
        e[x, a] += 1.0
        Q += alpha * e * delta
        if traces_out is not None:
            traces_out.append(e.copy())
    return Q


def learning_curve_csv(rows) -> str:
    """Rows of (epoch, metric, value, seed) as CSV text."""
    lines = ["epoch,metric,value,seed"]
    lines += [f"{k},{m},{v!r},{s}" for k, m, v, s in rows]
    return "\n".join(lines) + "\n"
