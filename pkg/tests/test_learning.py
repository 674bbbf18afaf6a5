from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distretrace.experiments import chain_episode, random_chain
from distretrace.learning import (
    TraceState,
    backward_view_episode,
    ce_logit_grad,
    ce_loss,
    forward_view_episode,
    learning_curve_csv,
    qr_loss,
    qr_loss_grad,
    qr_retrace_epoch,
    run_qr_retrace,
    sampled_target,
    softmax,
    step_size,
    stochastic_ce_batch,
    stochastic_ce_loss,
    stochastic_qr_batch,
    stochastic_qr_grad,
    stochastic_qr_loss,
    trace_products,
    value_backward_episode,
    value_forward_episode,
)
from distretrace.mdp import (
    TabularMDP,
    TraceConfig,
    Trajectory,
    chain3_mdp,
    counterexample_mdp,
    make_random_mdp,
    mix_policy,
    random_deterministic_policy,
    sample_trajectories,
    sample_trajectory,
    uniform_policy,
)
from distretrace.measures import DiracMixture, dirac, mixture_of, pushforward, wasserstein
from distretrace.operators import apply_backup, dirac_vector, ground_truth, project_vector, retrace_decompose
from distretrace.representations import quantile_levels, support_for_mdp

CE = counterexample_mdp()
ONE = uniform_policy(1, 1)
CE_TRACE = TraceConfig.truncated_is(2)
SIGNED = mixture_of([(1.0, 1.0), (0.5, 1.0), (0.0, -1.0)])


@st.composite
def mixtures(draw, max_atoms=6):
    k = draw(st.integers(1, max_atoms))
    locs = draw(st.lists(st.floats(-5, 5), min_size=k, max_size=k))
    raw = draw(st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k))
    return DiracMixture.from_atoms(locs, np.array(raw) / np.sum(raw))


def _off_policy(seed=0):
    mdp = make_random_mdp(seed)
    mu = uniform_policy(3, 2)
    pi = mix_policy(random_deterministic_policy(3, 2, seed + 1), mu, 0.6)
    rng = np.random.default_rng(seed)
    eta = {k: DiracMixture.from_atoms(rng.normal(0, 2, 4), rng.dirichlet(np.ones(4))) for k in mdp.pairs()}
    return mdp, pi, mu, eta


# -- losses ---------------------------------------------------------------------


def test_qr_loss_examples():
    assert qr_loss(2.0, 0.5, dirac(2.0)) == 0.0
    assert qr_loss(0.0, 0.5, dirac(2.0)) == 1.0
    assert qr_loss(0.0, 0.5, SIGNED) == pytest.approx(0.75)


def test_qr_loss_grad_examples():
    assert qr_loss_grad(0.0, 0.5, dirac(2.0)) == -0.5
    assert qr_loss_grad(3.0, 0.5, dirac(2.0)) == 0.5
    assert qr_loss_grad(0.5, 0.5, mixture_of([(0.0, 0.5), (1.0, 0.5)])) == 0.0
    # strict indicator: an atom at theta counts as not below
    assert qr_loss_grad(2.0, 0.3, dirac(2.0)) == pytest.approx(-0.3)


def test_qr_loss_broadcasts():
    taus = quantile_levels(4)
    out = qr_loss_grad(np.zeros(4), taus, dirac(1.0))
    np.testing.assert_allclose(out, -taus)
    assert qr_loss(np.zeros((2, 3)), 0.5, dirac(1.0)).shape == (2, 3)


@settings(max_examples=60, deadline=None)
@given(mixtures(), st.floats(0.01, 0.99), st.floats(-6, 6), st.floats(0.001, 3))
def test_qr_loss_is_convex(m, tau, theta, gap):
    assert qr_loss_grad(theta, tau, m) <= qr_loss_grad(theta + gap, tau, m) + 1e-12
    mid = qr_loss(theta + gap / 2, tau, m)
    assert mid <= 0.5 * (qr_loss(theta, tau, m) + qr_loss(theta + gap, tau, m)) + 1e-12


@settings(max_examples=60, deadline=None)
@given(mixtures(), st.floats(0.01, 0.99))
def test_qr_loss_minimised_at_quantile(m, tau):
    from distretrace.measures import quantile

    q = quantile(m, tau)
    grid = np.linspace(-6, 6, 241)
    assert qr_loss(q, tau, m) <= qr_loss(grid, tau, m).min() + 1e-12


def test_ce_loss_of_own_probs_is_entropy():
    grid = np.linspace(-1, 1, 5)
    probs = softmax(np.array([0.1, -0.3, 1.0, 0.0, 0.5]))
    target = DiracMixture.from_atoms(grid, probs)
    assert ce_loss(probs, target, grid) == pytest.approx(-np.sum(probs * np.log(probs)))


def test_ce_loss_is_linear_and_checks_support():
    grid = np.linspace(0, 1, 3)
    probs = np.array([0.2, 0.3, 0.5])
    a, b = dirac(0.25), dirac(0.9)
    from distretrace.measures import combine

    mixed = combine([(2.0, a), (-1.0, b)])
    assert ce_loss(probs, mixed, grid) == pytest.approx(2 * ce_loss(probs, a, grid) - ce_loss(probs, b, grid))
    with pytest.raises(ValueError):
        ce_loss(np.array([0.5, 0.5, 0.0]), dirac(1.0), grid)


def test_ce_logit_grad_matches_finite_differences():
    rng = np.random.default_rng(0)
    grid = np.linspace(-2, 2, 7)
    logits = rng.normal(size=7)
    target = rng.dirichlet(np.ones(7))
    m = DiracMixture.from_atoms(grid, target)
    g = ce_logit_grad(logits, target)
    for i in range(7):
        e = np.zeros(7)
        e[i] = 1e-6
        fd = (ce_loss(softmax(logits + e), m, grid) - ce_loss(softmax(logits - e), m, grid)) / 2e-6
        assert g[i] == pytest.approx(fd, abs=1e-7)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 5.0))
def test_ce_logit_grad_bounded(seed, scale):
    rng = np.random.default_rng(seed)
    logits = rng.normal(0, scale, size=11)
    target = rng.dirichlet(np.full(11, 0.3))
    assert np.abs(ce_logit_grad(logits, target)).max() <= 1.0


# -- sampled targets ----------------------------------------------------------------


def test_counterexample_estimate_is_exact():
    traj = sample_trajectory(CE, ONE, (0, 0), 2, rng=0)
    eta = dirac_vector(CE, 0.0)
    assert stochastic_qr_loss(traj, eta, CE, ONE, CE_TRACE, 0.0, 0.5) == pytest.approx(0.75)
    assert sampled_target(traj, eta, CE, ONE, CE_TRACE).allclose(dirac(1.5))
    assert stochastic_qr_grad(traj, eta, CE, ONE, CE_TRACE, 0.0, 0.5) == -0.5


def test_zero_trace_estimate_is_one_step():
    mdp, pi, mu, eta = _off_policy()
    zero = TraceConfig.constant(0.0, horizon=0)
    rng = np.random.default_rng(3)
    for _ in range(10):
        traj = sample_trajectory(mdp, mu, (1, 0), 1, rng, target=pi)
        (x, a, r, y), = traj.transitions()
        boot = DiracMixture.from_atoms(
            np.concatenate([eta[(y, b)].locs for b in range(2)]),
            np.concatenate([pi.probs[y, b] * eta[(y, b)].weights for b in range(2)]),
        )
        one_step = pushforward(boot, r, mdp.gamma)
        assert stochastic_qr_loss(traj, eta, mdp, pi, zero, 0.3, 0.4) == pytest.approx(qr_loss(0.3, 0.4, one_step), abs=1e-12)


def test_sampled_target_has_unit_mass():
    mdp, pi, mu, eta = _off_policy()
    trace = TraceConfig.clipped_is(1.5, horizon=3)
    rng = np.random.default_rng(4)
    for _ in range(20):
        traj = sample_trajectory(mdp, mu, (0, 1), 4, rng, target=pi)
        assert sampled_target(traj, eta, mdp, pi, trace).total_mass == pytest.approx(1.0, abs=1e-12)


def test_sampled_target_needs_full_length():
    mdp, pi, mu, eta = _off_policy()
    traj = sample_trajectory(mdp, mu, (0, 0), 2, 0, target=pi)
    with pytest.raises(ValueError):
        sampled_target(traj, eta, mdp, pi, TraceConfig.full_is(horizon=4))


def test_trace_products():
    traj = Trajectory([0, 0, 0, 0], [0, 0, 0], [0.0, 0.0, 0.0], [9.0, 2.0, 0.5])
    np.testing.assert_allclose(trace_products(traj, TraceConfig.full_is(horizon=5)), [1.0, 2.0, 1.0])
    np.testing.assert_allclose(trace_products(traj, TraceConfig.clipped_is(1.0, horizon=1)), [1.0, 1.0, 0.0])


def test_batch_matches_single_trajectory_estimates():
    mdp, pi, mu, eta = _off_policy(2)
    trace = TraceConfig.clipped_is_lambda(0.8, 1.2, horizon=2)
    batch = sample_trajectories(mdp, mu, (2, 1), 3, 40, 5, target=pi)
    grid = support_for_mdp(mdp, 21)
    probs = softmax(np.random.default_rng(0).normal(size=21))
    theta = np.array([-0.5, 0.2, 1.0])
    taus = np.array([0.1, 0.5, 0.9])
    loss, grad = stochastic_qr_batch(batch, eta, mdp, pi, trace, theta, taus)
    ce, _ = stochastic_ce_batch(batch, eta, mdp, pi, trace, probs, grid)
    for i in range(len(batch)):
        t = batch[i]
        np.testing.assert_allclose(loss[i], stochastic_qr_loss(t, eta, mdp, pi, trace, theta, taus), atol=1e-12)
        np.testing.assert_allclose(grad[i], stochastic_qr_grad(t, eta, mdp, pi, trace, theta, taus), atol=1e-12)
        assert ce[i] == pytest.approx(stochastic_ce_loss(t, eta, mdp, pi, trace, probs, grid), abs=1e-10)


def test_estimates_are_unbiased_small_sample():
    mdp, pi, mu, eta = _off_policy(1)
    trace = TraceConfig.clipped_is(1.0, horizon=2)
    exact = apply_backup(retrace_decompose(mdp, pi, mu, trace, 0, 0), eta)
    batch = sample_trajectories(mdp, mu, (0, 0), 3, 20_000, 8, target=pi)
    loss, grad = stochastic_qr_batch(batch, eta, mdp, pi, trace, 0.4, 0.3)
    for samples, oracle in ((loss, qr_loss(0.4, 0.3, exact)), (grad, qr_loss_grad(0.4, 0.3, exact))):
        se = samples.std(ddof=1) / math.sqrt(samples.size)
        assert abs(samples.mean() - oracle) <= 4 * se


def test_gradient_estimate_is_bounded():
    mdp, pi, mu, eta = _off_policy(3)
    trace = TraceConfig.full_is(horizon=3)
    batch = sample_trajectories(mdp, mu, (1, 1), 4, 2000, 1, target=pi)
    _, grad = stochastic_qr_batch(batch, eta, mdp, pi, trace, 0.0, 0.5)
    rho_max = (pi.probs / mu.probs).max()
    assert np.abs(grad).max() <= 1 + 2 * sum(rho_max**t for t in range(4))


# -- tabular QR-Retrace ---------------------------------------------------------------


def test_step_size_schedule():
    assert step_size(0.5, 0) == 0.5
    assert step_size(0.5, 100) == 0.25
    assert step_size(1.0, 50, K=50) == 0.5


def test_zero_step_leaves_table():
    mdp, pi, mu, _ = _off_policy()
    table = np.sort(np.random.default_rng(0).normal(size=(3, 2, 4)), axis=-1)
    out = qr_retrace_epoch(table, mdp, pi, mu, TraceConfig.clipped_is(1.0, horizon=1), 0.0, 10, 0)
    np.testing.assert_array_equal(out, table)
    with pytest.raises(ValueError):
        qr_retrace_epoch(table, mdp, pi, mu, TraceConfig.clipped_is(1.0, horizon=1), -1.0, 10, 0)


def test_qr_retrace_makes_progress():
    mdp = make_random_mdp(9)
    pi = uniform_policy(3, 2)
    m = 100
    truth = project_vector(ground_truth(mdp, pi, 500, 200), ("quantile", m))
    init = np.zeros((3, 2, m))
    table = run_qr_retrace(mdp, pi, pi, TraceConfig.constant(0.5, horizon=2), init, 40, 0.5, 50, 0, K=20)
    assert np.all(np.diff(table, axis=-1) >= 0)

    def dist(t):
        from distretrace.operators import quantile_vector, vector_distance

        return vector_distance(quantile_vector(t), truth, "w", 1.0)

    assert dist(table) < 0.5 * dist(init)


def test_qr_retrace_is_seeded():
    args = (CE, ONE, ONE, CE_TRACE, np.zeros((1, 1, 1)), 5, 0.5, 1)
    np.testing.assert_array_equal(run_qr_retrace(*args, seed=4), run_qr_retrace(*args, seed=4))


# -- forward and backward views --------------------------------------------------------


def test_forward_backward_chain_example():
    gamma = 0.5
    mdp = chain3_mdp(gamma, 1.0)
    pi = uniform_policy(3, 1)
    alpha = 1.1 * 2 * gamma**2
    table = np.array([[[0.0]], [[1.0]], [[0.0]]])
    traj = chain_episode(2)
    fwd = forward_view_episode(table, traj, 1.0, alpha, mdp, pi, horizon=1)
    state = TraceState()
    bwd = backward_view_episode(table, traj, 1.0, alpha, mdp, pi, state)
    assert fwd[0, 0, 0] == pytest.approx(0.5 * alpha, abs=1e-15)
    assert bwd[0, 0, 0] == pytest.approx(-0.5 * alpha, abs=1e-15)
    assert state.peak == 2


def test_forward_lambda_zero_is_one_step_update():
    mdp, pi, mu, _ = _off_policy()
    table = np.sort(np.random.default_rng(1).normal(size=(3, 2, 3)), axis=-1)
    traj = sample_trajectory(mdp, pi, (0, 0), 4, 2)
    out = forward_view_episode(table, traj, 0.0, 0.1, mdp, pi)
    expected = table.copy()
    eta0 = {k: DiracMixture.from_atoms(table[k], np.full(3, 1 / 3)) for k in mdp.pairs()}
    taus = quantile_levels(3)
    for x, a, r, y in traj.transitions():
        boot = DiracMixture.from_atoms(
            np.concatenate([table[y, b] for b in range(2)]),
            np.concatenate([np.full(3, pi.probs[y, b] / 3) for b in range(2)]),
        )
        expected[x, a] -= 0.1 * qr_loss_grad(expected[x, a], taus, pushforward(boot, r, mdp.gamma))
    assert eta0 is not None
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_forward_view_keeps_zero_gradient_table():
    # x0 -> x1 with reward 0; x1 has two actions whose quantiles are -1 and 1.
    # The one-step target at x0 is (1/2) delta_{-0.5} + (1/2) delta_{0.5}, and a
    # median parameter at 0 sits strictly between the atoms, so it does not move.
    P = np.zeros((3, 2, 3))
    P[0, :, 1] = 1.0
    P[1, :, 2] = 1.0
    P[2, :, 2] = 1.0
    mdp = TabularMDP.deterministic([[0.0, 0.0], [-1.0, 1.0], [0.0, 0.0]], P, 0.5, terminal_values={2: 0.0})
    pi = uniform_policy(3, 2)
    table = np.array([[[0.0], [0.0]], [[-1.0], [1.0]], [[0.0], [0.0]]])
    traj = Trajectory([0, 1], [0], [0.0], [1.0])
    np.testing.assert_array_equal(forward_view_episode(table, traj, 0.9, 0.3, mdp, pi), table)
    np.testing.assert_array_equal(backward_view_episode(table, traj, 0.9, 0.3, mdp, pi), table)


def test_single_transition_views_agree():
    mdp, pi, mu, _ = _off_policy()
    table = np.sort(np.random.default_rng(7).normal(size=(3, 2, 5)), axis=-1)
    for seed in range(5):
        traj = sample_trajectory(mdp, pi, (seed % 3, seed % 2), 1, seed)
        np.testing.assert_allclose(
            forward_view_episode(table, traj, 0.7, 0.2, mdp, pi),
            backward_view_episode(table, traj, 0.7, 0.2, mdp, pi),
            atol=1e-12,
        )


def test_backward_memory_grows_linearly():
    for T in (1, 3, 6):
        mdp, traj = random_chain(T, 0.9, np.random.default_rng(T))
        state = TraceState()
        backward_view_episode(np.zeros((T + 1, 1, 2)), traj, 0.8, 0.1, mdp, uniform_policy(T + 1, 1), state)
        assert state.peak == T


def test_backward_lambda_zero_drops_anchors():
    mdp, traj = random_chain(4, 0.9, np.random.default_rng(0))
    state = TraceState()
    backward_view_episode(np.zeros((5, 1, 1)), traj, 0.0, 0.1, mdp, uniform_policy(5, 1), state)
    assert state.peak == 1 and len(state) == 0


# -- value-based views ---------------------------------------------------------------


def test_value_backward_lambda_zero_is_td0():
    mdp, pi, mu, _ = _off_policy()
    traj = sample_trajectory(mdp, pi, (1, 1), 5, 3)
    Q = np.random.default_rng(0).normal(size=(3, 2))
    expected = Q.copy()
    for x, a, r, y in traj.transitions():
        expected[x, a] += 0.2 * (r + mdp.gamma * pi.probs[y] @ expected[y] - expected[x, a])
    np.testing.assert_allclose(value_backward_episode(Q, traj, 0.0, 0.2, mdp, pi), expected, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.floats(0.3, 0.99), st.floats(0, 1), st.floats(0.01, 1), st.integers(0, 2**32 - 1))
def test_value_views_agree_without_revisits(length, gamma, lam, alpha, seed):
    rng = np.random.default_rng(seed)
    mdp, traj = random_chain(length, gamma, rng)
    Q = rng.normal(size=(length + 1, 1))
    pi = uniform_policy(length + 1, 1)
    np.testing.assert_allclose(
        value_forward_episode(Q, traj, lam, alpha, mdp, pi),
        value_backward_episode(Q, traj, lam, alpha, mdp, pi),
        rtol=0,
        atol=1e-12,
    )


def test_unvisited_pair_has_zero_eligibility():
    mdp, pi, mu, _ = _off_policy()
    traj = Trajectory([0, 1, 0], [0, 1], [0.5, -0.2], [1.0, 1.0])
    traces = []
    value_backward_episode(np.zeros((3, 2)), traj, 0.9, 0.1, mdp, pi, traces)
    for e in traces:
        assert e[2, 0] == 0.0 and e[2, 1] == 0.0 and e[0, 1] == 0.0
    assert traces[-1][0, 0] == pytest.approx(mdp.gamma * 0.9)


def test_learning_curve_csv():
    text = learning_curve_csv([(1, "z", 1.5, 0), (2, "z", 1.75, 0)])
    assert text.splitlines() == ["epoch,metric,value,seed", "1,z,1.5,0", "2,z,1.75,0"]
