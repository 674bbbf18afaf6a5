"""Desk-scale experiments: the one-state counterexample, tabular sweeps,
estimator unbiasedness checks and the forward/backward comparison.

Each experiment returns an :class:`ExperimentResult` holding CSV rows plus a
list of named pass/fail checks. Results depend only on the configuration
(including its seed), so reruns are byte-identical.
"""
from __future__ import annotations

import dataclasses
import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .learning import (
    TraceState,
    backward_view_episode,
    ce_logit_grad,
    ce_loss,
    forward_view_episode,
    qr_loss,
    qr_loss_grad,
    run_qr_retrace,
    softmax,
    stochastic_ce_batch,
    stochastic_qr_batch,
    value_backward_episode,
    value_forward_episode,
)
from .mdp import (
    TabularMDP,
    TraceConfig,
    Trajectory,
    chain3_mdp,
    counterexample_mdp,
    make_random_mdp,
    make_rng,
    mix_policy,
    random_deterministic_policy,
    sample_trajectories,
    uniform_policy,
)
from .measures import DiracMixture, combine, compress, dirac, lp_distance, pushforward, wasserstein
from .operators import (
    apply_backup,
    contraction_rate,
    dirac_vector,
    fixed_point,
    ground_truth,
    make_operator,
    project_vector,
    retrace_decompose,
    vector_distance,
)
from .representations import support_for_mdp

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "Check",
    "EXPERIMENTS",
    "run_experiment",
    "counterexample",
    "sweep_offpolicy",
    "sweep_trace",
    "fixed_point_quality",
    "uncorrected_bias",
    "unbiasedness",
    "forward_backward",
    "qr_retrace_counterexample",
    "parse_config",
    "format_config",
    "sweep_instance",
]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of every experiment; unused fields are ignored.

    Defaults follow the usual tabular setting: 3 states, 2 actions,
    Dirichlet(0.5) transitions, gamma = 0.9, uniform behaviour, m = 100.
    """

    seed: int = 0
    # random MDP family
    num_mdps: int = 10
    num_states: int = 3
    num_actions: int = 2
    dirichlet: float = 0.5
    gamma: float = 0.9
    policy_convention: str = "main"
    # policies and traces
    epsilon: float = 0.5
    epsilon_grid: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    c_bar: float = 1.0
    c_bar_grid: tuple = (0.2, 0.5, 1.0, 2.0)
    bias_epsilon: float = 0.8
    trace: str = "clipped_is"
    lam: float = 1.0
    horizon: int = 2
    # representation and DP
    representation: str = "quantile"
    num_atoms: int = 100
    iters: int = 30
    fp_tol: float = 1e-9
    fp_max_iters: int = 2000
    gt_atoms: int = 1000
    gt_iters: int = 400
    metric_p: float = 2.0
    # counterexample
    runs: int = 10
    init_low: float = -5.0
    init_high: float = 5.0
    ce_iters: int = 30
    max_atoms: int = 100_000
    converge_tol: float = 1e-6
    diverge_floor: float = 0.1
    # sample-based checks
    num_configs: int = 5
    num_trajectories: int = 100_000
    ce_atoms: int = 51
    # forward/backward
    alpha_factor: float = 1.1
    fb_gamma: float = 0.5
    # QR-Retrace learning
    qr_epochs: int = 2000
    qr_alpha0: float = 0.5
    qr_decay: float = 100.0
    qr_trajectories: int = 1

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


_TUPLE_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig) if f.type in ("tuple", tuple)}


def _coerce(name: str, text: str):
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    if name not in fields:
        raise ValueError(f"unknown config key {name!r}")
    default = fields[name].default
    text = text.strip()
    if name in _TUPLE_FIELDS:
        return tuple(float(v) for v in text.split(",") if v.strip())
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment; lists are comma separated."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key] = _coerce(key, val)
    return (base or ExperimentConfig()).replace(**values)


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{f.name} = {_fmt(getattr(cfg, f.name))}\n" for f in dataclasses.fields(cfg))


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class ExperimentResult:
    name: str
    columns: list
    rows: list
    checks: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_csv(self, cfg: ExperimentConfig) -> str:
        out = [f"# distretrace {__version__}", f"# experiment: {self.name}", f"# seed: {cfg.seed}"]
        out += [f"# config {line}" for line in format_config(cfg).splitlines()]
        out += [f"# {k}: {_fmt(v)}" for k, v in self.notes.items()]
        out += [f"# check {c.line()}" for c in self.checks]
        out.append(",".join(self.columns))
        out += [",".join(_fmt(v) for v in row) for row in self.rows]
        return "\n".join(out) + "\n"


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    """Order-preserving map, optionally over worker processes."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _non_increasing(xs, tol=0.0) -> bool:
    return all(b <= a + tol for a, b in zip(xs, xs[1:]))


def _non_decreasing(xs, tol=0.0) -> bool:
    return all(b >= a - tol for a, b in zip(xs, xs[1:]))


# ---------------------------------------------------------------------------
# Counterexample
# ---------------------------------------------------------------------------


COUNTEREXAMPLE_OPERATORS = ("bellman", "retrace", "alt_bar", "alt_tilde")


def counterexample_trace() -> TraceConfig:
    """c_1 = rho_1 and c_t = 0 for t >= 2."""
    return TraceConfig.truncated_is(2)


def _iterate_capped(op, eta0, iters: int, max_atoms: int) -> list:
    """Unprojected iterates (atoms merged at 1e-12), stopping once an iterate exceeds ``max_atoms``."""
    out = [eta0]
    eta = eta0
    for _ in range(iters):
        if max(len(m) for m in eta.values()) > max_atoms:
            break
        eta = {k: compress(m, 1e-12) for k, m in op(eta).items()}
        out.append(eta)
    return out


def counterexample(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Iterate four operators on the one-state MDP from random Dirac starts."""
    mdp = counterexample_mdp()
    pi = uniform_policy(1, 1)
    trace = counterexample_trace()
    p = cfg.metric_p
    target = dirac(2.0)
    starts = make_rng(cfg.seed).uniform(cfg.init_low, cfg.init_high, size=cfg.runs)
    rows = []
    curves: dict = {}
    for kind in COUNTEREXAMPLE_OPERATORS:
        op = make_operator(kind, mdp, pi, pi, trace)
        for run, z0 in enumerate(starts):
            its = _iterate_capped(op, dirac_vector(mdp, z0), cfg.ce_iters, cfg.max_atoms)
            d = [lp_distance(e[(0, 0)], target, p) for e in its]
            curves[(kind, run)] = d
            rows += [(kind, run, float(z0), k, v, len(its[k][(0, 0)])) for k, v in enumerate(d)]

    beta = {k: make_operator(k, mdp, pi, pi, trace).modulus for k in ("bellman", "retrace")}
    checks = []
    for kind in ("retrace", "bellman"):
        mins = [min(curves[(kind, r)]) for r in range(cfg.runs)]
        checks.append(Check(
            f"{kind}_converges",
            max(mins) < cfg.converge_tol,
            f"worst min L{p:g} over {cfg.ce_iters} iterations = {max(mins):.3g} (threshold {cfg.converge_tol:g})",
        ))
        # L_p contraction with modulus beta^(1/p), compared on d^p where float
        # round-off near the fixed point is ~1e-16 rather than its p-th root
        ok = all(
            curves[(kind, r)][k] ** p <= beta[kind] ** k * curves[(kind, r)][0] ** p + 1e-12
            for r in range(cfg.runs)
            for k in range(len(curves[(kind, r)]))
        )
        checks.append(Check(f"{kind}_rate", ok, f"d_k^{p:g} <= {beta[kind]:g}^k d_0^{p:g} + 1e-12"))
    for kind in ("alt_bar", "alt_tilde"):
        mins = [min(curves[(kind, r)]) for r in range(cfg.runs)]
        reached = min(len(curves[(kind, r)]) - 1 for r in range(cfg.runs))
        checks.append(Check(
            f"{kind}_does_not_converge",
            min(mins) > cfg.diverge_floor,
            f"smallest min L{p:g} = {min(mins):.4g} over {reached}+ iterations (floor {cfg.diverge_floor:g})",
        ))
    return ExperimentResult(
        "counterexample",
        ["operator", "run", "z0", "iteration", f"L{p:g}_distance", "num_atoms"],
        rows,
        checks,
        {"beta_retrace": beta["retrace"], "beta_bellman": beta["bellman"], "tail_bound": mdp.gamma**2},
    )


def contraction_ratios_counterexample(z0: float = -3.7, z1: float = 4.1, iters: int = 10) -> dict:
    """Per-iteration W_inf ratios between two Dirac starts for the one-step and Retrace operators."""
    mdp = counterexample_mdp()
    pi = uniform_policy(1, 1)
    out = {}
    for kind in ("bellman", "retrace"):
        op = make_operator(kind, mdp, pi, pi, counterexample_trace())
        a, b = dirac_vector(mdp, z0), dirac_vector(mdp, z1)
        ratios = []
        for _ in range(iters):
            d0 = wasserstein(a[(0, 0)], b[(0, 0)], np.inf)
            a, b = op(a), op(b)
            ratios.append(wasserstein(a[(0, 0)], b[(0, 0)], np.inf) / d0)
        out[kind] = ratios
    return out


# ---------------------------------------------------------------------------
# Tabular sweeps
# ---------------------------------------------------------------------------


def sweep_instance(cfg: ExperimentConfig, index: int):
    """(mdp, pi_d, mu) for random instance ``index`` of the sweep family."""
    child = np.random.SeedSequence(cfg.seed).spawn(cfg.num_mdps)[index].spawn(2)
    mdp = make_random_mdp(child[0], cfg.num_states, cfg.num_actions, cfg.dirichlet, cfg.gamma)
    pi_d = random_deterministic_policy(cfg.num_states, cfg.num_actions, make_rng(child[1]))
    mu = uniform_policy(cfg.num_states, cfg.num_actions)
    return mdp, pi_d, mu


def _trace(cfg: ExperimentConfig, c_bar: float) -> TraceConfig:
    if cfg.trace == "clipped_is":
        return TraceConfig.clipped_is(c_bar, horizon=cfg.horizon)
    if cfg.trace == "clipped_is_lambda":
        return TraceConfig.clipped_is_lambda(cfg.lam, c_bar, horizon=cfg.horizon)
    if cfg.trace == "constant":
        return TraceConfig.constant(cfg.lam, horizon=cfg.horizon)
    if cfg.trace == "full_is":
        return TraceConfig.full_is(horizon=cfg.horizon)
    raise ValueError(f"unsupported sweep trace {cfg.trace!r}")


def _projection(cfg: ExperimentConfig, mdp: TabularMDP):
    if cfg.representation == "quantile":
        return ("quantile", cfg.num_atoms)
    if cfg.representation == "categorical":
        return ("categorical", support_for_mdp(mdp, cfg.num_atoms))
    raise ValueError(f"unknown representation {cfg.representation!r}")


_START = (0, 0)


@functools.lru_cache(maxsize=None)
def _retrace_cell(cfg: ExperimentConfig, index: int, epsilon: float, c_bar: float) -> dict:
    """Projected Retrace DP from Dirac(0): fixed point and convergence curve at (x0, a0)."""
    mdp, pi_d, mu = sweep_instance(cfg, index)
    pi = mix_policy(pi_d, mu, epsilon, cfg.policy_convention)
    trace = _trace(cfg, c_bar)
    op = make_operator("retrace", mdp, pi, mu, trace)
    proj = _projection(cfg, mdp)
    eta = project_vector(dirac_vector(mdp, 0.0), proj)
    iterates = [eta]
    sup_steps = []
    for k in range(cfg.fp_max_iters):
        nxt = project_vector(op(eta), proj)
        step = vector_distance(nxt, eta, "w", np.inf)
        sup_steps.append(step)
        eta = nxt
        if k < cfg.iters:
            iterates.append(eta)
        if step <= cfg.fp_tol and k >= cfg.iters:
            break
    fixed = eta
    p = cfg.metric_p
    curve = [vector_distance(e, fixed, "l", p, _START) for e in iterates]
    sup_w = [vector_distance(e, fixed, "w", np.inf) for e in iterates]
    return {
        "curve": curve,
        "sup_w_inf": sup_w,
        "fixed": fixed,
        "modulus": op.modulus,
        "fp_iters": len(sup_steps),
        "fp_step": sup_steps[-1],
    }


@functools.lru_cache(maxsize=None)
def _ground_truth_cell(cfg: ExperimentConfig, index: int, epsilon: float) -> dict:
    mdp, pi_d, mu = sweep_instance(cfg, index)
    pi = mix_policy(pi_d, mu, epsilon, cfg.policy_convention)
    return ground_truth(mdp, pi, cfg.gt_atoms, cfg.gt_iters)


@functools.lru_cache(maxsize=None)
def _uncorrected_cell(cfg: ExperimentConfig, index: int, epsilon: float) -> dict:
    mdp, pi_d, mu = sweep_instance(cfg, index)
    pi = mix_policy(pi_d, mu, epsilon, cfg.policy_convention)
    op = make_operator("uncorrected", mdp, pi, mu, n=cfg.horizon + 1)
    proj = _projection(cfg, mdp)
    fixed, n = fixed_point(op, proj, project_vector(dirac_vector(mdp, 0.0), proj), cfg.fp_max_iters, cfg.fp_tol)
    return fixed


def _cell_task(args):
    kind, cfg, index, eps, cb = args
    if kind == "retrace":
        return _retrace_cell(cfg, index, eps, cb)
    if kind == "truth":
        return _ground_truth_cell(cfg, index, eps)
    return _uncorrected_cell(cfg, index, eps)


def _prefetch(tasks: list, jobs: int) -> None:
    """Fill the cell caches, in parallel when ``jobs`` > 1."""
    if jobs <= 1:
        return
    todo = [t for t in tasks]
    results = _map(_cell_task, todo, jobs)
    for (kind, cfg, index, eps, cb), res in zip(todo, results):
        if kind == "retrace":
            _seed_cache(_retrace_cell, res, cfg, index, eps, cb)
        elif kind == "truth":
            _seed_cache(_ground_truth_cell, res, cfg, index, eps)
        else:
            _seed_cache(_uncorrected_cell, res, cfg, index, eps)


_SEEDED: dict = {}


def _seed_cache(fn, value, *args):
    _SEEDED[(fn.__name__,) + args] = value


def _cached(fn, *args):
    key = (fn.__name__,) + args
    if key in _SEEDED:
        return _SEEDED[key]
    return fn(*args)


def _auc(curve) -> tuple[float, float]:
    c = np.asarray(curve)
    raw = float(c.sum())
    norm = float((c / c[0]).sum()) if c[0] > 0 else 0.0
    return raw, norm


def _curve_sweep(cfg, name, grid, param_name, cell_args, jobs, monotone) -> ExperimentResult:
    _prefetch([("retrace", cfg, i) + cell_args(v) for v in grid for i in range(cfg.num_mdps)], jobs)
    rows, mean_norm, mean_raw = [], [], []
    curves_ok, rate_ok = True, True
    for v in grid:
        aucs = []
        for i in range(cfg.num_mdps):
            cell = _cached(_retrace_cell, cfg, i, *cell_args(v))
            c0 = cell["curve"][0]
            for k, d in enumerate(cell["curve"]):
                rows.append((v, i, k, d, d / c0 if c0 > 0 else 0.0, cell["sup_w_inf"][k]))
            aucs.append(_auc(cell["curve"]))
            sw = cell["sup_w_inf"]
            # mixtures only give the worst component scale in W_inf, so gamma
            # (not beta) is the guaranteed per-step factor here
            rate_ok &= all(b <= cfg.gamma * a + 1e-8 for a, b in zip(sw, sw[1:]))
            curves_ok &= _non_increasing(sw, 1e-8)
        mean_raw.append(float(np.mean([a[0] for a in aucs])))
        mean_norm.append(float(np.mean([a[1] for a in aucs])))
    ordering = monotone(mean_norm)
    checks = [
        Check(f"auc_{'non_decreasing' if monotone is _nd else 'non_increasing'}_in_{param_name}", ordering,
              f"mean normalised AUC {', '.join(f'{v:g}:{a:.4f}' for v, a in zip(grid, mean_norm))}"),
        Check("curves_decreasing", curves_ok, "sup-W_inf distance to the fixed point is non-increasing"),
        Check("rate_at_most_gamma", rate_ok, "sup-W_inf ratio <= gamma per step"),
    ]
    notes = {
        "mean_auc_raw": tuple(mean_raw),
        "mean_auc_normalised": tuple(mean_norm),
        "tail_bound": cfg.gamma ** (cfg.horizon + 1),
        "start_pair": "0,0",
    }
    cols = [param_name, "mdp", "iteration", f"L{cfg.metric_p:g}_distance", "normalised_distance", "sup_W_inf"]
    return ExperimentResult(name, cols, rows, checks, notes)


def _nd(xs):
    return _non_decreasing(xs)


def _ni(xs):
    return _non_increasing(xs)


def sweep_offpolicy(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Convergence to the projected Retrace fixed point across off-policyness levels."""
    return _curve_sweep(cfg, "sweep-offpolicy", cfg.epsilon_grid, "epsilon", lambda e: (float(e), float(cfg.c_bar)), jobs, _nd)


def sweep_trace(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Convergence speed across trace clipping levels c_bar at fixed epsilon."""
    return _curve_sweep(cfg, "sweep-trace", cfg.c_bar_grid, "c_bar", lambda c: (float(cfg.epsilon), float(c)), jobs, _ni)


def fixed_point_quality(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """L_p(eta_R, Pi_Q eta^pi) at (x0, a0) for each c_bar."""
    eps = float(cfg.epsilon)
    tasks = [("truth", cfg, i, eps, None) for i in range(cfg.num_mdps)]
    tasks += [("retrace", cfg, i, eps, float(c)) for c in cfg.c_bar_grid for i in range(cfg.num_mdps)]
    _prefetch(tasks, jobs)
    rows, means = [], []
    for c in cfg.c_bar_grid:
        vals = []
        for i in range(cfg.num_mdps):
            mdp, _, _ = sweep_instance(cfg, i)
            ref = project_vector(_cached(_ground_truth_cell, cfg, i, eps), _projection(cfg, mdp))
            fixed = _cached(_retrace_cell, cfg, i, eps, float(c))["fixed"]
            q = vector_distance(fixed, ref, "l", cfg.metric_p, _START)
            vals.append(q)
            rows.append((float(c), i, q))
        means.append(float(np.mean(vals)))
    checks = [Check("quality_non_increasing_in_c_bar", _non_increasing(means),
                    f"mean L{cfg.metric_p:g} {', '.join(f'{c:g}:{m:.5f}' for c, m in zip(cfg.c_bar_grid, means))}")]
    notes = {"mean_quality": tuple(means), "tail_bound": cfg.gamma ** (cfg.horizon + 1), "start_pair": "0,0"}
    return ExperimentResult("fixed-point-quality", ["c_bar", "mdp", f"L{cfg.metric_p:g}_to_projected_truth"], rows, checks, notes)


def uncorrected_bias(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Fixed-point distance to eta^pi for Retrace versus uncorrected n-step (n = horizon + 1)."""
    eps = float(cfg.bias_epsilon)
    cb = float(cfg.c_bar)
    tasks = [("truth", cfg, i, eps, None) for i in range(cfg.num_mdps)]
    tasks += [("retrace", cfg, i, eps, cb) for i in range(cfg.num_mdps)]
    tasks += [("uncorrected", cfg, i, eps, None) for i in range(cfg.num_mdps)]
    _prefetch(tasks, jobs)
    rows, gaps = [], []
    for i in range(cfg.num_mdps):
        truth = _cached(_ground_truth_cell, cfg, i, eps)
        d_r = vector_distance(_cached(_retrace_cell, cfg, i, eps, cb)["fixed"], truth, "l", cfg.metric_p, _START)
        d_u = vector_distance(_cached(_uncorrected_cell, cfg, i, eps), truth, "l", cfg.metric_p, _START)
        rows.append((i, d_r, d_u))
        gaps.append(d_u - d_r)
    margin = float(np.mean(gaps))
    checks = [Check("uncorrected_bias_exceeds_retrace", margin > 0, f"mean(uncorrected - retrace) = {margin:.5f}")]
    notes = {"epsilon": eps, "uncorrected_n": cfg.horizon + 1, "tail_bound": cfg.gamma ** (cfg.horizon + 1)}
    cols = ["mdp", f"retrace_L{cfg.metric_p:g}", f"uncorrected_L{cfg.metric_p:g}"]
    return ExperimentResult("uncorrected-bias", cols, rows, checks, notes)


# ---------------------------------------------------------------------------
# Estimator unbiasedness
# ---------------------------------------------------------------------------


def unbiasedness_config(cfg: ExperimentConfig, index: int):
    """Random MDP, policies, trace, distribution vector and loss parameters for check ``index``."""
    rng = make_rng(np.random.SeedSequence([cfg.seed, 7, index]))
    mdp = make_random_mdp(rng, cfg.num_states, cfg.num_actions, cfg.dirichlet, cfg.gamma)
    mu = uniform_policy(cfg.num_states, cfg.num_actions)
    pi = mix_policy(random_deterministic_policy(cfg.num_states, cfg.num_actions, rng), mu, cfg.epsilon, cfg.policy_convention)
    trace = _trace(cfg, cfg.c_bar)
    eta = {k: DiracMixture.from_atoms(rng.normal(0.0, 2.0, size=5), rng.dirichlet(np.ones(5))) for k in mdp.pairs()}
    theta = float(rng.normal())
    tau = float(rng.uniform(0.05, 0.95))
    grid = support_for_mdp(mdp, cfg.ce_atoms)
    probs = softmax(rng.normal(size=cfg.ce_atoms))
    start = (int(rng.integers(cfg.num_states)), int(rng.integers(cfg.num_actions)))
    return dict(mdp=mdp, pi=pi, mu=mu, trace=trace, eta=eta, theta=theta, tau=tau, grid=grid, probs=probs, start=start, rng=rng)


def unbiasedness(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Monte Carlo means of the stochastic QR loss, QR gradient and CE estimate versus exact targets."""
    rows, checks = [], []
    for idx in range(cfg.num_configs):
        c = unbiasedness_config(cfg, idx)
        mdp, pi, mu, trace = c["mdp"], c["pi"], c["mu"], c["trace"]
        x, a = c["start"]
        exact = apply_backup(retrace_decompose(mdp, pi, mu, trace, x, a), c["eta"])
        batch = sample_trajectories(mdp, mu, (x, a), trace.horizon + 1, cfg.num_trajectories, c["rng"], target=pi)
        loss, grad = stochastic_qr_batch(batch, c["eta"], mdp, pi, trace, c["theta"], c["tau"])
        ce, _ = stochastic_ce_batch(batch, c["eta"], mdp, pi, trace, c["probs"], c["grid"])
        oracles = {
            "qr_loss": qr_loss(c["theta"], c["tau"], exact),
            "qr_grad": qr_loss_grad(c["theta"], c["tau"], exact),
            "ce_loss": ce_loss(c["probs"], exact, c["grid"]),
        }
        samples = {"qr_loss": loss, "qr_grad": grad, "ce_loss": ce}
        for name, s in samples.items():
            mean = float(s.mean())
            se = float(s.std(ddof=1) / math.sqrt(s.size))
            z = abs(mean - oracles[name]) / se if se > 0 else (0.0 if mean == oracles[name] else math.inf)
            ok = abs(mean - oracles[name]) <= max(3.0 * se, 1e-12)
            rows.append((idx, name, mean, se, oracles[name], z))
            checks.append(Check(f"{name}_config{idx}", ok, f"mean={mean:.6g} se={se:.3g} exact={oracles[name]:.6g} |z|={z:.2f}"))
        rho_max = float(np.max(np.divide(pi.probs, mu.probs)))
        bound = 1.0 + 2.0 * sum(rho_max**t for t in range(trace.horizon + 1))
        checks.append(Check(f"qr_grad_bounded_config{idx}", bool(np.abs(grad).max() <= bound + 1e-12),
                            f"max |grad| = {np.abs(grad).max():.4g} <= {bound:.4g}"))
    # softmax parameterisation: every logit gradient coordinate lies in [-1, 1]
    rng = make_rng(np.random.SeedSequence([cfg.seed, 11]))
    worst = 0.0
    for _ in range(200):
        logits = rng.normal(0, 3, size=cfg.ce_atoms)
        target = rng.dirichlet(np.full(cfg.ce_atoms, 0.3))
        worst = max(worst, float(np.abs(ce_logit_grad(logits, target)).max()))
    checks.append(Check("ce_logit_grad_bounded", worst <= 1.0, f"max |grad| = {worst:.4f}"))
    return ExperimentResult("unbiasedness", ["config", "quantity", "mc_mean", "std_error", "exact", "abs_z"], rows, checks,
                            {"num_trajectories": cfg.num_trajectories})


# ---------------------------------------------------------------------------
# Forward versus backward view
# ---------------------------------------------------------------------------


def chain_episode(length: int) -> Trajectory:
    """Zero-reward walk 0 -> 1 -> ... -> length that ends in the terminal state."""
    states = np.arange(length + 1)
    return Trajectory(states, np.zeros(length, dtype=int), np.zeros(length), np.ones(length), True)


def random_chain(length: int, gamma: float, rng) -> tuple[TabularMDP, Trajectory]:
    """Deterministic chain with random rewards and a terminal value; one no-revisit episode."""
    S = length + 1
    P = np.zeros((S, 1, S))
    for s in range(length):
        P[s, 0, s + 1] = 1.0
    P[length, 0, length] = 1.0
    rewards = rng.normal(size=(S, 1))
    rewards[length] = 0.0
    mdp = TabularMDP.deterministic(rewards, P, gamma, terminal_values={length: float(rng.normal())})
    traj = Trajectory(np.arange(S), np.zeros(length, dtype=int), rewards[:length, 0], np.ones(length), True)
    return mdp, traj


def forward_backward(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """The three-state chain where forward and backward views disagree, plus value-based agreement."""
    gamma = cfg.fb_gamma
    mdp = chain3_mdp(gamma, 1.0)
    pi = uniform_policy(3, 1)
    alpha = cfg.alpha_factor * 2 * gamma**2
    table = np.array([[[0.0]], [[1.0]], [[0.0]]])
    traj = chain_episode(2)
    fwd = float(forward_view_episode(table, traj, 1.0, alpha, mdp, pi, horizon=1)[0, 0, 0])
    state = TraceState()
    bwd = float(backward_view_episode(table, traj, 1.0, alpha, mdp, pi, state)[0, 0, 0])
    rows = [("distributional_forward", alpha, fwd, 0.5 * alpha), ("distributional_backward", alpha, bwd, -0.5 * alpha)]
    in_window = 2 * gamma**2 < alpha < 2 * gamma
    checks = [
        Check("alpha_in_window", in_window, f"alpha={alpha:g}, window=({2 * gamma**2:g}, {2 * gamma:g})"),
        Check("forward_is_plus_half_alpha", abs(fwd - 0.5 * alpha) <= 1e-12, f"theta1={float(fwd)!r}"),
        Check("backward_is_minus_half_alpha", abs(bwd + 0.5 * alpha) <= 1e-12, f"theta1={float(bwd)!r}"),
        Check("backward_trace_memory", state.peak == len(traj), f"peak anchors={state.peak}, T={len(traj)}"),
    ]
    rng = make_rng(np.random.SeedSequence([cfg.seed, 13]))
    worst = 0.0
    for trial in range(20):
        length = int(rng.integers(1, 8))
        cmdp, ctraj = random_chain(length, float(rng.uniform(0.3, 0.99)), rng)
        Q = rng.normal(size=(cmdp.num_states, 1))
        lam = float(rng.uniform(0, 1))
        alpha_v = float(rng.uniform(0.01, 1))
        cpi = uniform_policy(cmdp.num_states, 1)
        qf = value_forward_episode(Q, ctraj, lam, alpha_v, cmdp, cpi)
        qb = value_backward_episode(Q, ctraj, lam, alpha_v, cmdp, cpi)
        gap = float(np.abs(qf - qb).max())
        worst = max(worst, gap)
        rows.append(("value_gap", alpha_v, gap, 0.0))
    checks.append(Check("value_views_agree", worst <= 1e-12, f"max |Q_fwd - Q_bwd| = {worst:.3g}"))
    return ExperimentResult("forward-backward", ["quantity", "alpha", "value", "expected"], rows, checks,
                            {"gamma": gamma, "alpha_window": (2 * gamma**2, 2 * gamma)})


# ---------------------------------------------------------------------------
# Sample-based QR-Retrace on the counterexample
# ---------------------------------------------------------------------------


def qr_retrace_counterexample(cfg: ExperimentConfig) -> ExperimentResult:
    mdp = counterexample_mdp()
    pi = uniform_policy(1, 1)
    rows = []

    def record(k, table):
        if k % 100 == 99 or k == cfg.qr_epochs - 1:
            rows.append((k + 1, "z", float(table[0, 0, 0]), cfg.seed))

    z = run_qr_retrace(mdp, pi, pi, counterexample_trace(), np.zeros((1, 1, 1)), cfg.qr_epochs, cfg.qr_alpha0,
                       cfg.qr_trajectories, cfg.seed, cfg.qr_decay, record)
    final = float(z[0, 0, 0])
    checks = [Check("quantile_reaches_two", abs(final - 2.0) < 0.05, f"z={final:.5f}")]
    return ExperimentResult("qr-retrace", ["epoch", "metric", "value", "seed"], rows, checks)


EXPERIMENTS: dict[str, Callable[..., ExperimentResult]] = {
    "counterexample": counterexample,
    "sweep-offpolicy": sweep_offpolicy,
    "sweep-trace": sweep_trace,
    "fixed-point-quality": fixed_point_quality,
    "uncorrected-bias": uncorrected_bias,
    "unbiasedness": unbiasedness,
    "forward-backward": forward_backward,
}


def run_experiment(name: str, cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}")
    return EXPERIMENTS[name](cfg, jobs)
