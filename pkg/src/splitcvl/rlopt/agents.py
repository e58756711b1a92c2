"""Five learning agents over the partition environment.

All agents work against the same small env protocol: ``n_states``,
``n_actions``, ``horizon``, ``feature_dim``, ``reset(rng)``,
``step(state, action, rng)`` and (for evaluation) ``evaluate_action`` and
``state_features``. States and actions are plain integers.

  * Q-Learning        tabular, epsilon-greedy with linear decay
  * Multi-Q-Learning  ensemble of K tables; each update lands on one
                      uniformly chosen table and bootstraps from the mean
                      of the others; behavior follows the ensemble mean
  * Actor-Critic      tabular softmax policy, TD(0) critic, advantage
                      policy gradient; replayed transitions can optionally
                      refresh the critic
  * DQN               TinyNet Q-function, uniform replay, periodically
                      synced target network, squared TD error, plain SGD
  * PPO               clipped-surrogate policy gradient with a TinyNet
                      critic baseline and configurable entropy bonus

A training run is strictly sequential and driven by a single seeded
generator, so (agent, hyperparameters, seed) reproduces the convergence
trace bit for bit. Traces record the effect value experienced at every
environment step (the additive inverse of the reward) together with a
trailing moving average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import NonFiniteError
from .env import ReplayBuffer, Transition
from .nets import TinyNet, log_softmax, softmax


@dataclass(frozen=True)
class Hyperparams:
    """Training knobs. Defaults are artifact choices, all overridable."""

    lr: float = 0.1                     # tabular value learning rate
    lr_actor: float = 1.0               # tabular softmax-logit rate
    lr_net: float = 0.1                 # SGD rate for TinyNet agents
    gamma: float = 0.9
    epsilon_start: float = 1.0
    epsilon_final: float = 0.01
    epsilon_decay_fraction: float = 0.5  # share of steps spent decaying
    replay_capacity: int = 1000
    batch_size: int = 32
    target_sync: int = 100
    ppo_clip: float = 0.2
    ppo_epochs: int = 4
    ppo_batch: int = 64
    entropy_coef: float = 0.2           # annealed to zero over a PPO run
    multi_q_tables: int = 4
    hidden: tuple[int, ...] = (32,)
    moving_avg_window: int = 100
    ac_replay: bool = False

    def __post_init__(self) -> None:
        if self.moving_avg_window < 1:
            raise ValueError("moving_avg_window must be >= 1")
        if self.multi_q_tables < 2:
            raise ValueError("multi_q_tables must be >= 2")
        if not 0.0 <= self.epsilon_final <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_final <= epsilon_start <= 1")


@dataclass(frozen=True)
class ConvergenceTrace:
    """Per-step effect values and their trailing moving average."""

    effects: np.ndarray
    moving_avg: np.ndarray
    window: int

    def __len__(self) -> int:
        return len(self.effects)

    @property
    def final_moving_avg(self) -> float:
        if len(self.moving_avg) == 0:
            raise ValueError("empty trace has no moving average")
        return float(self.moving_avg[-1])

    def to_csv(self) -> str:
        lines = ["step,effect,moving_avg"]
        for i, (e, m) in enumerate(zip(self.effects, self.moving_avg)):
            lines.append(f"{i},{float(e)!r},{float(m)!r}")
        return "\n".join(lines) + "\n"


def _make_trace(effects: list[float], window: int) -> ConvergenceTrace:
    eff = np.asarray(effects, dtype=np.float64)
    if eff.size == 0:
        return ConvergenceTrace(eff, eff.copy(), window)
    cs = np.cumsum(eff)
    ma = np.empty_like(eff)
    head = min(window, eff.size)
    ma[:head] = cs[:head] / np.arange(1, head + 1)
    if eff.size > window:
        ma[window:] = (cs[window:] - cs[:-window]) / window
    return ConvergenceTrace(eff, ma, window)


@dataclass(frozen=True)
class TrainedPolicy:
    """Greedy policy extracted at the end of training.

    ``table`` carries the learned state-action table for tabular agents
    (Q-values, ensemble-mean Q-values, or actor logits) and is None for
    the network-based agents.
    """

    kind: str
    _action_fn: Callable[[int], int] = field(repr=False)
    table: np.ndarray | None = None

    def action(self, state: int) -> int:
        return self._action_fn(state)


def policy_effect(env, policy: TrainedPolicy) -> float:
    """Deterministic effect of the greedy policy, averaged over states."""
    values = [
        env.evaluate_action(s, policy.action(s)) for s in range(env.n_states)
    ]
    return math.fsum(values) / len(values)


def _epsilon(step: int, total_steps: int, hyper: Hyperparams) -> float:
    decay_steps = hyper.epsilon_decay_fraction * total_steps
    if decay_steps <= 0:
        return hyper.epsilon_final
    frac = min(1.0, step / decay_steps)
    return hyper.epsilon_start - (hyper.epsilon_start - hyper.epsilon_final) * frac


def _eps_greedy(q_row: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    if rng.random() < eps:
        return int(rng.integers(len(q_row)))
    return int(np.argmax(q_row))


def train_q_learning(
    env, episodes: int, hyper: Hyperparams | None = None, seed: int = 0
) -> tuple[TrainedPolicy, ConvergenceTrace]:
    """Tabular Q-learning; one trace row per environment step."""
    hyper = hyper or Hyperparams()
    rng = np.random.default_rng(seed)
    q = np.zeros((env.n_states, env.n_actions))
    total_steps = episodes * env.horizon
    effects: list[float] = []
    t = 0
    for _ in range(episodes):
        state = env.reset(rng)
        for _ in range(env.horizon):
            action = _eps_greedy(q[state], _epsilon(t, total_steps, hyper), rng)
            tr = env.step(state, action, rng)
            bootstrap = 0.0 if tr.done else hyper.gamma * float(q[tr.next_state].max())
            q[state, action] += hyper.lr * (tr.reward + bootstrap - q[state, action])
            effects.append(-tr.reward)
            state = tr.next_state
            t += 1
    policy = TrainedPolicy("q_learning", lambda s, q=q: int(np.argmax(q[s])), table=q)
    return policy, _make_trace(effects, hyper.moving_avg_window)


def train_multi_q(
    env,
    episodes: int,
    K: int | None = None,
    hyper: Hyperparams | None = None,
    seed: int = 0,
) -> tuple[TrainedPolicy, ConvergenceTrace]:
    """Ensemble Q-learning: bootstrap each table from the mean of the rest.

    Each update lands on one uniformly chosen table, which therefore sees
    only 1/K of the visits; the per-table rate is scaled by K (capped at
    1) so the ensemble mean learns at ``lr`` regardless of the ensemble
    size.
    """
    hyper = hyper or Hyperparams()
    k = K if K is not None else hyper.multi_q_tables
    if k < 2:
        raise ValueError("multi-Q needs at least two tables")
    rng = np.random.default_rng(seed)
    tables = np.zeros((k, env.n_states, env.n_actions))
    table_lr = min(1.0, hyper.lr * k)
    total_steps = episodes * env.horizon
    effects: list[float] = []
    t = 0
    for _ in range(episodes):
        state = env.reset(rng)
        for _ in range(env.horizon):
            mean_q = tables.mean(axis=0)
            action = _eps_greedy(mean_q[state], _epsilon(t, total_steps, hyper), rng)
            tr = env.step(state, action, rng)
            j = int(rng.integers(k))
            others = (tables.sum(axis=0) - tables[j]) / (k - 1)
            bootstrap = 0.0 if tr.done else hyper.gamma * float(
                others[tr.next_state].max()
            )
            tables[j, state, action] += table_lr * (
                tr.reward + bootstrap - tables[j, state, action]
            )
            effects.append(-tr.reward)
            state = tr.next_state
            t += 1
    mean_q = tables.mean(axis=0)
    policy = TrainedPolicy("multi_q", lambda s, q=mean_q: int(np.argmax(q[s])), table=mean_q)
    return policy, _make_trace(effects, hyper.moving_avg_window)


def train_actor_critic(
    env, steps: int, hyper: Hyperparams | None = None, seed: int = 0
) -> tuple[TrainedPolicy, ConvergenceTrace]:
    """Tabular softmax actor with a TD(0) critic.

    The logits start at zero, so the initial policy is uniform (entropy
    log of the action count). When ``ac_replay`` is set, each step also
    refreshes the critic from a replayed batch; the actor itself stays
    strictly on-policy.
    """
    hyper = hyper or Hyperparams()
    rng = np.random.default_rng(seed)
    logits = np.zeros((env.n_states, env.n_actions))
    values = np.zeros(env.n_states)
    buffer = ReplayBuffer(hyper.replay_capacity) if hyper.ac_replay else None
    effects: list[float] = []
    state = env.reset(rng)
    steps_in_episode = 0
    for _ in range(steps):
        probs = softmax(logits[state][None, :])[0]
        action = int(rng.choice(env.n_actions, p=probs))
        tr = env.step(state, action, rng)
        td_target = tr.reward + (
            0.0 if tr.done else hyper.gamma * values[tr.next_state]
        )
        advantage = td_target - values[state]
        values[state] += hyper.lr * advantage
        one_hot = np.zeros(env.n_actions)
        one_hot[action] = 1.0
        logits[state] += hyper.lr_actor * advantage * (one_hot - probs)
        if buffer is not None:
            buffer.push(tr)
            for rep in buffer.sample(rng, hyper.batch_size):
                rep_target = rep.reward + (
                    0.0 if rep.done else hyper.gamma * values[rep.next_state]
                )
                values[rep.state] += hyper.lr * (rep_target - values[rep.state])
        effects.append(-tr.reward)
        steps_in_episode += 1
        if tr.done or steps_in_episode >= env.horizon:
            state = env.reset(rng)
            steps_in_episode = 0
        else:
            state = tr.next_state
    policy = TrainedPolicy(
        "actor_critic", lambda s, logits=logits: int(np.argmax(logits[s])),
        table=logits,
    )
    return policy, _make_trace(effects, hyper.moving_avg_window)


def _feature_cache(env) -> Callable[[int], np.ndarray]:
    cache: dict[int, np.ndarray] = {}

    def features(state: int) -> np.ndarray:
        if state not in cache:
            cache[state] = env.state_features(state)
        return cache[state]

    return features


_FEATURE_TABLE_LIMIT = 4096


def _feature_table(env) -> np.ndarray | None:
    """Dense (n_states, feature_dim) matrix for small state spaces."""
    if env.n_states > _FEATURE_TABLE_LIMIT:
        return None
    return np.stack([env.state_features(s) for s in range(env.n_states)])


def _batch_features(table, feats, state_ids) -> np.ndarray:
    if table is not None:
        return table[state_ids]
    return np.stack([feats(s) for s in state_ids])


def train_dqn(
    env, steps: int, hyper: Hyperparams | None = None, seed: int = 0
) -> tuple[TrainedPolicy, ConvergenceTrace]:
    """Deep Q-network on bin one-hot features."""
    hyper = hyper or Hyperparams()
    rng = np.random.default_rng(seed)
    feats = _feature_cache(env)
    table = _feature_table(env)
    net = TinyNet((env.feature_dim, *hyper.hidden, env.n_actions), rng)
    target = net.copy()
    buffer = ReplayBuffer(hyper.replay_capacity)
    effects: list[float] = []
    state = env.reset(rng)
    steps_in_episode = 0
    for t in range(steps):
        q_row = net.forward(feats(state))[0]
        if not np.all(np.isfinite(q_row)):
            raise NonFiniteError("Q-network diverged to non-finite values; lower lr_net")
        action = _eps_greedy(q_row, _epsilon(t, steps, hyper), rng)
        tr = env.step(state, action, rng)
        buffer.push(tr)
        batch_size = min(hyper.batch_size, len(buffer))
        batch = buffer.sample(rng, batch_size)
        x = _batch_features(table, feats, [b.state for b in batch])
        x_next = _batch_features(table, feats, [b.next_state for b in batch])
        q_next = target.forward(x_next).max(axis=1)
        not_done = np.array([0.0 if b.done else 1.0 for b in batch])
        y = np.array([b.reward for b in batch]) + hyper.gamma * not_done * q_next
        q = net.forward(x)
        grad = np.zeros_like(q)
        rows = np.arange(batch_size)
        acts = np.array([b.action for b in batch])
        grad[rows, acts] = 2.0 * (q[rows, acts] - y) / batch_size
        net.zero_grads()
        net.backward(grad)
        net.sgd_step(hyper.lr_net)
        if (t + 1) % hyper.target_sync == 0:
            target.copy_params_from(net)
        effects.append(-tr.reward)
        steps_in_episode += 1
        if tr.done or steps_in_episode >= env.horizon:
            state = env.reset(rng)
            steps_in_episode = 0
        else:
            state = tr.next_state

    def act(s: int, net=net, feats=feats) -> int:
        return int(np.argmax(net.forward(feats(s))[0]))

    policy = TrainedPolicy("dqn", act)
    return policy, _make_trace(effects, hyper.moving_avg_window)


def ppo_surrogate_ratios(
    policy_net: TinyNet, features: np.ndarray, actions: np.ndarray,
    logp_old: np.ndarray
) -> np.ndarray:
    """New/old probability ratios of the chosen actions."""
    logp = log_softmax(policy_net.forward(features))
    rows = np.arange(len(actions))
    return np.exp(logp[rows, actions] - logp_old)


def ppo_policy_gradient(
    policy_net: TinyNet,
    features: np.ndarray,
    actions: np.ndarray,
    advantages: np.ndarray,
    logp_old: np.ndarray,
    clip: float,
    entropy_coef: float,
) -> np.ndarray:
    """dLoss/dlogits for the clipped surrogate with an entropy bonus.

    Follows a fresh forward pass on ``policy_net``. Samples whose ratio
    has left the clip interval on the unfavourable side contribute no
    policy gradient, which is exactly the clipped-surrogate rule. With an
    infinite clip this reduces to the vanilla policy gradient of the
    batch.
    """
    logp = log_softmax(policy_net.forward(features))
    probs = np.exp(logp)
    n, _ = probs.shape
    rows = np.arange(n)
    # exponent clamp keeps a collapsed old policy from overflowing the ratio
    ratio = np.exp(np.clip(logp[rows, actions] - logp_old, -30.0, 30.0))
    active = np.where(
        advantages >= 0.0, ratio <= 1.0 + clip, ratio >= 1.0 - clip
    ).astype(np.float64)
    one_hot = np.zeros_like(probs)
    one_hot[rows, actions] = 1.0
    coeff = active * ratio * advantages
    grad = -(coeff[:, None] * (one_hot - probs)) / n
    if entropy_coef != 0.0:
        entropy = -(probs * logp).sum(axis=1)
        grad += entropy_coef * probs * (logp + entropy[:, None]) / n
    return grad


def train_ppo(
    env, steps: int, hyper: Hyperparams | None = None, seed: int = 0
) -> tuple[TrainedPolicy, ConvergenceTrace]:
    """Clipped-surrogate policy optimization with a critic baseline.

    Advantages are normalized per batch and the entropy bonus is annealed
    linearly to zero across the run: strong early exploration keeps the
    policy from collapsing onto a suboptimal mode before the critic has
    calibrated, and a zero late bonus lets it concentrate fully.
    """
    hyper = hyper or Hyperparams()
    rng = np.random.default_rng(seed)
    feats = _feature_cache(env)
    policy_net = TinyNet((env.feature_dim, *hyper.hidden, env.n_actions), rng)
    value_net = TinyNet((env.feature_dim, *hyper.hidden, 1), rng)
    effects: list[float] = []
    state = env.reset(rng)
    steps_in_episode = 0
    done_steps = 0
    while done_steps < steps:
        batch_n = min(hyper.ppo_batch, steps - done_steps)
        batch: list[Transition] = []
        logp_old = np.empty(batch_n)
        for i in range(batch_n):
            logp_row = log_softmax(policy_net.forward(feats(state)))[0]
            if not np.all(np.isfinite(logp_row)):
                raise NonFiniteError(
                    "policy diverged to non-finite logits; lower lr_net"
                )
            action = int(rng.choice(env.n_actions, p=np.exp(logp_row)))
            tr = env.step(state, action, rng)
            batch.append(tr)
            logp_old[i] = logp_row[action]
            effects.append(-tr.reward)
            steps_in_episode += 1
            if tr.done or steps_in_episode >= env.horizon:
                state = env.reset(rng)
                steps_in_episode = 0
            else:
                state = tr.next_state
        done_steps += batch_n
        entropy_coef = hyper.entropy_coef * (1.0 - done_steps / steps)

        x = np.stack([feats(b.state) for b in batch])
        x_next = np.stack([feats(b.next_state) for b in batch])
        rewards = np.array([b.reward for b in batch])
        not_done = np.array([0.0 if b.done else 1.0 for b in batch])
        actions = np.array([b.action for b in batch])
        v_next = value_net.forward(x_next)[:, 0]
        targets = rewards + hyper.gamma * not_done * v_next
        advantages = targets - value_net.forward(x)[:, 0]
        spread = advantages.std()
        if spread > 1e-12:
            advantages = (advantages - advantages.mean()) / spread

        for _ in range(hyper.ppo_epochs):
            grad = ppo_policy_gradient(
                policy_net, x, actions, advantages, logp_old,
                hyper.ppo_clip, entropy_coef,
            )
            policy_net.zero_grads()
            policy_net.backward(grad)
            policy_net.sgd_step(hyper.lr_net)

            v = value_net.forward(x)
            value_net.zero_grads()
            value_net.backward(2.0 * (v - targets[:, None]) / len(batch))
            value_net.sgd_step(hyper.lr_net)

    def act(s: int, net=policy_net, feats=feats) -> int:
        return int(np.argmax(net.forward(feats(s))[0]))

    policy = TrainedPolicy("ppo", act)
    return policy, _make_trace(effects, hyper.moving_avg_window)


AGENTS: dict[str, Callable] = {
    "q_learning": train_q_learning,
    "multi_q": train_multi_q,
    "actor_critic": train_actor_critic,
    "dqn": train_dqn,
    "ppo": train_ppo,
}


def train_agent(
    name: str, env, steps: int, hyper: Hyperparams | None = None, seed: int = 0
) -> tuple[TrainedPolicy, ConvergenceTrace]:
    """Dispatch by agent name; episode-based agents treat steps as episodes."""
    if name not in AGENTS:
        raise ValueError(
            f"unknown agent {name!r}; choose one of {sorted(AGENTS)}"
        )
    if name == "multi_q":
        return train_multi_q(env, steps, hyper=hyper, seed=seed)
    return AGENTS[name](env, steps, hyper=hyper, seed=seed)
