"""Actor-critic GPU-allocation agent: MLP policy/value nets in plain numpy.

The networks are small (four hidden layers of 100, 150, 200, 100 units), so
forward and backward passes are hand-rolled in float64. That keeps gradient
checks against central finite differences tight and avoids a heavyweight
autodiff dependency for what is a few matrix multiplies.

The discrete head emits K softmax probabilities where action index a (0-based)
means allocating a ratio of a/K GPUs to architecture evaluation; the top
ratio is therefore (K-1)/K, never 1.0. The continuous head emits the mean and
standard deviation of a Gaussian over the allocation ratio, sampled values
clamped to [0, 1].
"""

from __future__ import annotations


import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

_LOG_2PI = math.log(2.0 * math.pi)
# clamp on the raw log-sigma head output so entropy bonuses cannot run the
# exploration width off to overflow; gradients vanish outside the range
_LOG_SIGMA_RANGE = (-4.0, 2.0)


class NumericalError(RuntimeError):
    """Non-finite parameters or gradients; training halts rather than drifts."""


@dataclass(frozen=True)
class PolicyConfig:
    state_dim: int = 27
    hidden: tuple = (100, 150, 200, 100)
    head: str = "discrete"          # "discrete" or "continuous"
    k: int = 8                      # discrete action count
    sigma0: float = 0.25            # initial Gaussian std for the continuous head

    def __post_init__(self):
        if self.head not in ("discrete", "continuous"):
            raise ValueError(f"unknown head type {self.head!r}")

    @property
    def head_dim(self) -> int:
        return self.k if self.head == "discrete" else 2


@dataclass(frozen=True)
class ActionDistribution:
    kind: str
    probs: np.ndarray | None = None   # discrete
    mu: float | None = None           # continuous
    sigma: float | None = None


# ---------------------------------------------------------------------------
# MLP plumbing: params are flat lists [W0, b0, W1, b1, ...]; hidden layers use
# softplus, the output layer is linear and zero-initialized so the initial
# policy is uniform (and the initial value estimate zero).

def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def init_mlp(rng: np.random.Generator, sizes: tuple[int, ...]) -> list[np.ndarray]:
    params: list[np.ndarray] = []
    n_layers = len(sizes) - 1
    for i in range(n_layers):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        if i == n_layers - 1:
            w = np.zeros((fan_in, fan_out))
        else:
            bound = 1.0 / math.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params.append(w)
        params.append(np.zeros(fan_out))
    return params


def mlp_forward(params: list[np.ndarray], x: np.ndarray):
    """Batched forward pass; returns output and the cache for backward."""
    acts = [x]
    pre = []
    n_layers = len(params) // 2
    a = x
    for i in range(n_layers):
        w, b = params[2 * i], params[2 * i + 1]
        z = a @ w + b
        pre.append(z)
        a = _softplus(z) if i < n_layers - 1 else z
        acts.append(a)
    return a, (acts, pre)


def mlp_backward(params: list[np.ndarray], cache, d_out: np.ndarray) -> list[np.ndarray]:
    """Gradients wrt every parameter given d(loss)/d(output)."""
    acts, pre = cache
    n_layers = len(params) // 2
    grads: list[np.ndarray | None] = [None] * len(params)
    delta = d_out
    for i in range(n_layers - 1, -1, -1):
        a_in = acts[i]
        grads[2 * i] = a_in.T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            w = params[2 * i]
            delta = (delta @ w.T) * _sigmoid(pre[i - 1])
    return grads


# ---------------------------------------------------------------------------


class Policy:
    """Actor and critic networks sharing the trunk shape, not parameters."""

    def __init__(self, cfg: PolicyConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng([int(seed), 1])
        trunk = (cfg.state_dim, *cfg.hidden)
        self.actor_params = init_mlp(rng, (*trunk, cfg.head_dim))
        self.critic_params = init_mlp(rng, (*trunk, 1))

    def clone(self) -> "Policy":
        other = object.__new__(Policy)
        other.cfg = self.cfg
        other.actor_params = [p.copy() for p in self.actor_params]
        other.critic_params = [p.copy() for p in self.critic_params]
        return other

    def check_finite(self):
        for p in (*self.actor_params, *self.critic_params):
            if not np.all(np.isfinite(p)):
                raise NumericalError("non-finite policy parameters")


def _head_dist(cfg: PolicyConfig, out_row: np.ndarray) -> ActionDistribution:
    if cfg.head == "discrete":
        z = out_row - out_row.max()
        p = np.exp(z)
        p /= p.sum()
        return ActionDistribution(kind="discrete", probs=p)
    mu = float(_sigmoid(out_row[0]))
    s_raw = float(np.clip(out_row[1], *_LOG_SIGMA_RANGE))
    sigma = float(cfg.sigma0 * math.exp(s_raw))
    return ActionDistribution(kind="continuous", mu=mu, sigma=sigma)


def policy_forward(policy: Policy, state: np.ndarray) -> ActionDistribution:
    """Action distribution for one (normalized) state."""
    policy.check_finite()
    x = np.asarray(state, dtype=float).reshape(1, -1)
    if x.shape[1] != policy.cfg.state_dim:
        raise ValueError(f"state has {x.shape[1]} dims, expected {policy.cfg.state_dim}")
    out, _ = mlp_forward(policy.actor_params, x)
    return _head_dist(policy.cfg, out[0])


def sample_action(dist: ActionDistribution, rng: np.random.Generator) -> float:
    if dist.kind == "discrete":
        return int(rng.choice(len(dist.probs), p=dist.probs))
    draw = rng.normal(dist.mu, dist.sigma)
    return float(np.clip(draw, 0.0, 1.0))


def allocation_ratio(action, cfg: PolicyConfig) -> float:
    """Map a sampled action to the GPU share given to evaluation."""
    if cfg.head == "discrete":
        return float(action) / cfg.k
    return float(action)


def entropy(dist: ActionDistribution) -> float:
    if dist.kind == "discrete":
        p = dist.probs
        nz = p[p > 0]
        return float(-(nz * np.log(nz)).sum())
    return float(math.log(dist.sigma) + 0.5 * (_LOG_2PI + 1.0))


def log_prob(dist: ActionDistribution, action) -> float:
    if dist.kind == "discrete":
        return float(np.log(dist.probs[int(action)]))
    z = (float(action) - dist.mu) / dist.sigma
    return float(-0.5 * z * z - math.log(dist.sigma) - 0.5 * _LOG_2PI)


# ---------------------------------------------------------------------------
# Reward shaping and advantage


@dataclass(frozen=True)
class RewardWeights:
    """Scalarization of the (carbon, hypervolume gain, new samples) tuple."""

    alpha: float = 1.0      # hypervolume-increase weight
    beta: float = 0.1       # carbon-cost weight
    gamma_n: float = 0.01   # new-sample-count weight
    hv_scale: float = 1.0
    carbon_budget: float = 1.0
    nn_scale: float = 10.0


def scalarize_reward(co_t: float, hi_t: float, nn_t: float, weights: RewardWeights) -> float:
    """Positive for hypervolume gained and samples trained, negative for carbon."""
    if hi_t < 0 or co_t < 0:
        raise ValueError("carbon cost and hypervolume increase must be >= 0")
    return (
        weights.alpha * (hi_t / weights.hv_scale)
        - weights.beta * (co_t / weights.carbon_budget)
        + weights.gamma_n * (nn_t / weights.nn_scale)
    )


def advantage(r_t: float, gamma: float, v_next: float, v_cur: float, terminal: bool = False) -> float:
    """One-step temporal-difference advantage estimate."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    if terminal:
        v_next = 0.0
    return r_t + gamma * v_next - v_cur


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: float           # index for discrete heads, ratio for continuous
    reward: float
    next_state: np.ndarray
    terminal: bool = False


# ---------------------------------------------------------------------------
# Gradients. Actor gradient is of  sum_b coeff_b * logpi(a_b|s_b) + ent_b * H_b
# seeded through the head; the same machinery serves both the update and the
# finite-difference checks.


def _actor_head_grad(cfg: PolicyConfig, out: np.ndarray, actions, coeff, ent_coeff):
    """d(objective)/d(head output) for a batch, plus per-sample logp and entropy."""
    b = out.shape[0]
    coeff = np.asarray(coeff, dtype=float).reshape(b)
    ent_coeff = np.asarray(ent_coeff, dtype=float).reshape(b)
    d_out = np.zeros_like(out)
    logps = np.empty(b)
    ents = np.empty(b)
    if cfg.head == "discrete":
        z = out - out.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        idx = np.asarray(actions, dtype=int).reshape(b)
        logp_all = np.log(np.clip(p, 1e-300, None))
        logps = logp_all[np.arange(b), idx]
        ents = -(p * logp_all).sum(axis=1)
        onehot = np.zeros_like(p)
        onehot[np.arange(b), idx] = 1.0
        d_logp = onehot - p
        d_ent = -p * (logp_all + ents[:, None])
        d_out = coeff[:, None] * d_logp + ent_coeff[:, None] * d_ent
    else:
        a = np.asarray(actions, dtype=float).reshape(b)
        mu = _sigmoid(out[:, 0])
        s_raw = np.clip(out[:, 1], *_LOG_SIGMA_RANGE)
        sigma = cfg.sigma0 * np.exp(s_raw)
        zscore = (a - mu) / sigma
        logps = -0.5 * zscore**2 - np.log(sigma) - 0.5 * _LOG_2PI
        ents = np.log(sigma) + 0.5 * (_LOG_2PI + 1.0)
        d_mu = zscore / sigma
        d_mraw = d_mu * mu * (1.0 - mu)
        d_sraw = zscore**2 - 1.0
        in_range = (out[:, 1] > _LOG_SIGMA_RANGE[0]) & (out[:, 1] < _LOG_SIGMA_RANGE[1])
        d_out[:, 0] = coeff * d_mraw
        d_out[:, 1] = (coeff * d_sraw + ent_coeff) * in_range  # dH/d s_raw = 1
    return d_out, logps, ents


def actor_log_prob_grads(policy: Policy, state: np.ndarray, action):
    """(log pi(a|s), gradients wrt actor params); used by gradient checks."""
    x = np.asarray(state, dtype=float).reshape(1, -1)
    out, cache = mlp_forward(policy.actor_params, x)
    d_out, logps, _ = _actor_head_grad(policy.cfg, out, [action], [1.0], [0.0])
    grads = mlp_backward(policy.actor_params, cache, d_out)
    return float(logps[0]), grads


def critic_value(policy: Policy, state: np.ndarray) -> float:
    x = np.asarray(state, dtype=float).reshape(1, -1)
    out, _ = mlp_forward(policy.critic_params, x)
    return float(out[0, 0])


def critic_value_grads(policy: Policy, state: np.ndarray):
    """(V(s), gradients wrt critic params); used by gradient checks."""
    x = np.asarray(state, dtype=float).reshape(1, -1)
    out, cache = mlp_forward(policy.critic_params, x)
    grads = mlp_backward(policy.critic_params, cache, np.ones_like(out))
    return float(out[0, 0]), grads


@dataclass
class UpdateDiagnostics:
    mean_advantage: float
    mean_entropy: float
    actor_loss: float
    critic_loss: float


def _discounted_returns(rewards: np.ndarray, terminals: np.ndarray,
                        gamma: float) -> np.ndarray:
    """Reward-to-go per step; terminal flags reset the backward accumulation."""
    returns = np.empty_like(rewards)
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        if terminals[i]:
            acc = 0.0
        acc = rewards[i] + gamma * acc
        returns[i] = acc
    return returns


def _batch_grads(policy: Policy, transitions: list[Transition], gamma: float,
                 entropy_weight: float, normalize_advantage: bool = False,
                 advantage_mode: str = "td0"):
    """Shared gradient computation for SGD and Adam paths.

    ``advantage_mode`` selects the actor's credit assignment: ``"td0"`` uses
    one-step bootstrapped advantages, ``"mc"`` uses full reward-to-go minus
    the critic baseline. In the scheduling environment the hypervolume payoff
    of an evaluation lands several hours after the allocation that paid its
    carbon, and the state carries no work-in-progress feature, so one-step
    advantages credit the wrong hour; Monte-Carlo returns reach back to the
    paying action.

    With ``normalize_advantage`` the actor's advantage coefficients are
    standardized across the batch (zero mean, unit variance). The reward
    scale in the scheduling environment is on the order of 1e-2 per hour, so
    raw advantages produce vanishing policy gradients; standardizing is a
    baseline shift plus positive rescaling and keeps the ascent direction.
    Critic targets always use the raw (unnormalized) targets.
    """
    if not transitions:
        raise ValueError("transition batch must be non-empty")
    if advantage_mode not in ("td0", "mc"):
        raise ValueError(f"unknown advantage_mode {advantage_mode!r}")
    policy.check_finite()
    b = len(transitions)
    states = np.stack([np.asarray(t.state, dtype=float) for t in transitions])
    next_states = np.stack([np.asarray(t.next_state, dtype=float) for t in transitions])
    rewards = np.array([t.reward for t in transitions])
    terminals = np.array([t.terminal for t in transitions])
    actions = [t.action for t in transitions]

    v_cur_out, critic_cache = mlp_forward(policy.critic_params, states)
    v_cur = v_cur_out[:, 0]
    if advantage_mode == "mc":
        targets = _discounted_returns(rewards, terminals, gamma)
    else:
        v_next = mlp_forward(policy.critic_params, next_states)[0][:, 0]
        v_next = np.where(terminals, 0.0, v_next)
        targets = rewards + gamma * v_next
    adv = targets - v_cur

    adv_actor = adv
    if normalize_advantage:
        adv_actor = adv - adv.mean()
        sd = adv_actor.std()
        if sd > 1e-12:
            adv_actor = adv_actor / sd

    # actor: ascend logpi * A + entropy bonus  ->  seed with -1/B for descent
    coeff = -adv_actor / b
    ent_coeff = np.full(b, -entropy_weight / b)
    actor_out, actor_cache = mlp_forward(policy.actor_params, states)
    d_out, logps, ents = _actor_head_grad(policy.cfg, actor_out, actions, coeff, ent_coeff)
    actor_grads = mlp_backward(policy.actor_params, actor_cache, d_out)

    # critic: squared TD error against the detached target
    d_v = (2.0 / b) * (v_cur - targets)
    critic_grads = mlp_backward(policy.critic_params, critic_cache, d_v[:, None])

    for g in (*actor_grads, *critic_grads):
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient in actor-critic update")

    diag = UpdateDiagnostics(
        mean_advantage=float(adv.mean()),
        mean_entropy=float(ents.mean()),
        actor_loss=float(-(logps * adv + entropy_weight * ents).mean()),
        critic_loss=float(((v_cur - targets) ** 2).mean()),
    )
    return actor_grads, critic_grads, diag


def actor_critic_update(
    policy: Policy,
    transitions: list[Transition],
    lr_actor: float = 1e-4,
    lr_critic: float = 1e-3,
    gamma: float = 0.99,
    entropy_weight: float = 0.01,
) -> UpdateDiagnostics:
    """One SGD step on actor and critic from a batch of transitions.

    Mutates the policy in place and returns diagnostics. Advantages are the
    one-step TD estimates from the critic before the update.
    """
    actor_grads, critic_grads, diag = _batch_grads(policy, transitions, gamma, entropy_weight)
    for p, g in zip(policy.actor_params, actor_grads):
        p -= lr_actor * g
    for p, g in zip(policy.critic_params, critic_grads):
        p -= lr_critic * g
    return diag


class _Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    entropy_weight: float = 0.01
    optimizer: str = "adam"         # "adam" or "sgd"
    advantage_mode: str = "mc"      # "mc" (reward-to-go) or "td0" (bootstrapped)
    normalize_advantage: bool = True
    eval_every: int = 25            # validation cadence, in episodes
    val_seeds: tuple = (10_001, 10_002, 10_003)


def greedy_action(dist: ActionDistribution):
    if dist.kind == "discrete":
        return int(np.argmax(dist.probs))
    return float(np.clip(dist.mu, 0.0, 1.0))


def _rollout_return(policy: Policy, env, seed: int, greedy: bool,
                    rng: np.random.Generator | None = None) -> float:
    state = env.reset(seed)
    total = 0.0
    while True:
        dist = policy_forward(policy, state)
        action = greedy_action(dist) if greedy else sample_action(dist, rng)
        state, reward, done = env.step(allocation_ratio(action, policy.cfg))
        total += reward
        if done:
            return total


def train_agent(
    env,
    episodes: int,
    policy: Policy,
    cfg: TrainConfig | None = None,
    seed: int = 0,
) -> tuple[Policy, list[dict]]:
    """Episodic on-policy training loop.

    The environment exposes ``reset(seed) -> state`` and
    ``step(eval_ratio) -> (state, reward, done)`` at one decision per
    simulated hour. Returns the best policy by greedy validation-seed mean
    return (the initial policy if ``episodes`` is 0) and the learning curve.
    """
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng([int(seed), 2])
    if cfg.optimizer == "adam":
        opt_actor = _Adam(policy.actor_params, cfg.lr_actor)
        opt_critic = _Adam(policy.critic_params, cfg.lr_critic)
    elif cfg.optimizer != "sgd":
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}")

    def validate(p: Policy) -> float:
        return float(np.mean([_rollout_return(p, env, s, greedy=True) for s in cfg.val_seeds]))

    best_policy = policy.clone()
    best_score = validate(policy) if episodes > 0 else None
    curve: list[dict] = []

    for episode in range(episodes):
        state = env.reset(int(rng.integers(2**31)))
        transitions: list[Transition] = []
        total = 0.0
        while True:
            dist = policy_forward(policy, state)
            action = sample_action(dist, rng)
            next_state, reward, done = env.step(allocation_ratio(action, policy.cfg))
            transitions.append(Transition(state, action, reward, next_state, done))
            total += reward
            state = next_state
            if done:
                break
        if cfg.optimizer == "adam":
            actor_grads, critic_grads, diag = _batch_grads(
                policy, transitions, cfg.gamma, cfg.entropy_weight,
                cfg.normalize_advantage, cfg.advantage_mode)
            opt_actor.step(policy.actor_params, actor_grads)
            opt_critic.step(policy.critic_params, critic_grads)
        else:
            diag = actor_critic_update(
                policy, transitions, cfg.lr_actor, cfg.lr_critic, cfg.gamma, cfg.entropy_weight)
        entry = {
            "episode": episode,
            "return": total,
            "steps": len(transitions),
            "mean_advantage": diag.mean_advantage,
            "mean_entropy": diag.mean_entropy,
            "critic_loss": diag.critic_loss,
        }
        if (episode + 1) % cfg.eval_every == 0 or episode == episodes - 1:
            score = validate(policy)
            entry["val_return"] = score
            if best_score is None or score >= best_score:
                best_score = score
                best_policy = policy.clone()
        curve.append(entry)
    return best_policy, curve


# ---------------------------------------------------------------------------
# Checkpoints


CHECKPOINT_VERSION = 1


def save_policy(policy: Policy, path: str | Path, extra_meta: dict | None = None) -> None:
    """Single-file .npz checkpoint: parameters plus a JSON metadata blob."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": {**asdict(policy.cfg), "hidden": list(policy.cfg.hidden)},
        "extra": extra_meta or {},
    }
    arrays = {f"actor_{i}": p for i, p in enumerate(policy.actor_params)}
    arrays.update({f"critic_{i}": p for i, p in enumerate(policy.critic_params)})
    np.savez(Path(path), meta=json.dumps(meta, sort_keys=True), **arrays)


def load_policy(path: str | Path) -> Policy:
    with np.load(Path(path)) as data:
        meta = json.loads(str(data["meta"]))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        cfg_dict = dict(meta["config"])
        cfg_dict["hidden"] = tuple(cfg_dict["hidden"])
        cfg = PolicyConfig(**cfg_dict)
        policy = Policy(cfg, seed=0)
        policy.actor_params = [data[f"actor_{i}"].copy() for i in range(len(policy.actor_params))]
        policy.critic_params = [data[f"critic_{i}"].copy() for i in range(len(policy.critic_params))]
    return policy
