"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
from __future__ import annotations

import time

import numpy as np
import pytest

from _configs import random_config, random_vector
from distretrace.experiments import (
    ExperimentConfig,
    contraction_ratios_counterexample,
    counterexample,
    fixed_point_quality,
    forward_backward,
    qr_retrace_counterexample,
    sweep_offpolicy,
    sweep_trace,
    unbiasedness,
    uncorrected_bias,
)
from distretrace.operators import (
    contraction_rate,
    make_operator,
    retrace_backup,
    retrace_decompose,
    value_retrace_backup,
    vector_distance,
)

DEFAULT = ExperimentConfig()


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str, elapsed: float, limit: float):
        fast = elapsed < limit
        with capsys.disabled():
            status = "PASS" if ok and fast else "FAIL"
            print(f"\n{status} criterion {number}: {detail} [{elapsed:.2f} s, limit {limit:g} s]")
        assert ok, detail
        assert fast, f"took {elapsed:.2f} s, limit {limit:g} s"

    return emit


def _configs(seed: int, count: int, budget: int = 60_000):
    rng = np.random.default_rng(seed)
    return rng, [random_config(rng, max_n=6, budget=budget) for _ in range(count)]


def test_criterion_1_counterexample(report):
    t0 = time.perf_counter()
    res = counterexample(DEFAULT)
    names = ["retrace_converges", "bellman_converges", "alt_bar_does_not_converge", "alt_tilde_does_not_converge"]
    checks = [res.check(n) for n in names]
    detail = "; ".join(c.line() for c in checks)
    report(1, all(c.passed for c in checks), detail, time.perf_counter() - t0, 5.0)


def test_criterion_2_contraction_factors(report):
    t0 = time.perf_counter()
    out = contraction_ratios_counterexample()
    err_b = float(np.max(np.abs(np.array(out["bellman"]) - 0.5)))
    err_r = float(np.max(np.abs(np.array(out["retrace"]) - 0.25)))
    detail = f"one-step ratio error {err_b:.2e}, Retrace ratio error {err_r:.2e}"
    report(2, err_b <= 1e-10 and err_r <= 1e-10, detail, time.perf_counter() - t0, 1.0)


def test_criterion_3_weights_are_convex(report):
    t0 = time.perf_counter()
    _, configs = _configs(3, 50)
    worst_neg, worst_sum = 0.0, 0.0
    for cfg in configs:
        for x, a in cfg.mdp.pairs():
            spec = retrace_decompose(cfg.mdp, cfg.pi, cfg.mu, cfg.trace, x, a)
            worst_neg = min(worst_neg, spec.min_weight)
            worst_sum = max(worst_sum, abs(spec.total_weight - 1.0))
    ok = worst_neg >= 0.0 and worst_sum <= 1e-10
    report(3, ok, f"min weight {worst_neg:.3g}, max |sum - 1| {worst_sum:.3g}", time.perf_counter() - t0, 30.0)


def test_criterion_4_mean_consistency(report):
    t0 = time.perf_counter()
    rng, configs = _configs(3, 50)
    worst = 0.0
    for cfg in configs:
        eta = random_vector(rng, cfg.mdp)
        Q = np.array([[eta[(x, a)].mean for a in range(cfg.mdp.num_actions)] for x in range(cfg.mdp.num_states)])
        for x, a in cfg.mdp.pairs():
            m = retrace_backup(eta, cfg.mdp, cfg.pi, cfg.mu, cfg.trace, x, a).mean
            worst = max(worst, abs(m - value_retrace_backup(Q, cfg.mdp, cfg.pi, cfg.mu, cfg.trace, x, a)))
    report(4, worst <= 1e-10, f"max mean gap {worst:.3g}", time.perf_counter() - t0, 30.0)


def test_criterion_5_contraction_suite(report):
    t0 = time.perf_counter()
    # a smaller prefix budget keeps 400 pairs of back-ups under the time limit
    rng, configs = _configs(5, 20, budget=5_000)
    ps = (1.0, 2.0, np.inf)
    worst = {("w", p): 0.0 for p in ps} | {("l", p): 0.0 for p in ps}
    violations = []
    for i, cfg in enumerate(configs):
        op = make_operator("retrace", cfg.mdp, cfg.pi, cfg.mu, cfg.trace)
        rate = contraction_rate(cfg.mdp, cfg.pi, cfg.mu, cfg.trace)
        bound = rate.beta + rate.tail_bound
        for _ in range(20):
            e1, e2 = random_vector(rng, cfg.mdp), random_vector(rng, cfg.mdp)
            o1, o2 = op(e1), op(e2)
            for kind in ("w", "l"):
                for p in ps:
                    mod = bound if kind == "w" else bound ** (1.0 / p)  # p = inf gives 1
                    d0 = vector_distance(e1, e2, kind, p)
                    d1 = vector_distance(o1, o2, kind, p)
                    if d1 > mod * d0 + 1e-10:
                        violations.append((i, kind, p, d1, mod * d0))
                    if d0 > 0:
                        worst[(kind, p)] = max(worst[(kind, p)], d1 / (mod * d0))
    detail = ", ".join(f"{k.upper()}{p:g} worst ratio/bound {v:.3f}" for (k, p), v in worst.items())
    report(5, not violations, f"{len(violations)} violations; {detail}", time.perf_counter() - t0, 120.0)


def test_criterion_6_unbiasedness(report):
    t0 = time.perf_counter()
    res = unbiasedness(DEFAULT.replace(num_configs=5, num_trajectories=100_000))
    within = [c for c in res.checks if c.name.startswith(("qr_loss_", "qr_grad_config", "ce_loss_"))]
    zs = [row[5] for row in res.rows]
    ok = len(within) == 15 and all(c.passed for c in within)
    report(6, ok, f"{sum(c.passed for c in within)}/{len(within)} within 3 SE, max |z| {max(zs):.2f}",
           time.perf_counter() - t0, 120.0)


def test_criterion_7_forward_backward(report):
    t0 = time.perf_counter()
    res = forward_backward(DEFAULT)
    report(7, res.passed, "; ".join(c.line() for c in res.checks), time.perf_counter() - t0, 1.0)


def test_criterion_8_sweeps(report):
    t0 = time.perf_counter()
    results = [
        ("a", sweep_offpolicy(DEFAULT), "auc_non_decreasing_in_epsilon"),
        ("b", sweep_trace(DEFAULT), "auc_non_increasing_in_c_bar"),
        ("c", fixed_point_quality(DEFAULT), "quality_non_increasing_in_c_bar"),
        ("d", uncorrected_bias(DEFAULT), "uncorrected_bias_exceeds_retrace"),
    ]
    checks = [(tag, res.check(name)) for tag, res, name in results]
    detail = "; ".join(f"({tag}) {c.line()}" for tag, c in checks)
    report(8, all(c.passed for _, c in checks), detail, time.perf_counter() - t0, 300.0)


def test_criterion_9_qr_retrace(report):
    t0 = time.perf_counter()
    res = qr_retrace_counterexample(DEFAULT)
    report(9, res.passed, res.checks[0].line(), time.perf_counter() - t0, 60.0)
