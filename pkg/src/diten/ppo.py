"""Clipped-surrogate policy-gradient agent over the placement decision.

The policy is one MLP emitting U independent server-choice softmax blocks;
a second MLP is the state-value critic.  Rewards are the slot objective
with logarithmic capacity barriers, advantages come from truncated
generalized advantage estimation, and updates are full-batch passes over
one episode's transitions (ascent on the clipped surrogate for the actor,
descent on the squared temporal-difference error for the critic).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import Config, ScenarioConfig
from .costs import manhattan
from .nn import (
    AdamState,
    adam_step,
    backward,
    block_log_probs,
    forward,
    init_mlp,
    sgd_step,
    softmax_block_sample,
)

__all__ = [
    "HISTORY_CAP_FACTOR",
    "feature_length",
    "encode_state",
    "barrier",
    "reward",
    "gae",
    "ppo_actor_grad",
    "vanilla_actor_grad",
    "critic_grad",
    "PpoAgent",
]

# history counts are unbounded; features clip at this multiple of fresh_max
HISTORY_CAP_FACTOR = 10.0


def feature_length(n_users: int, n_servers: int) -> int:
    """Length of the flat observation: per-user scalars and one-hot host,
    per-server scalars, and the user-server distance grid."""
    return n_users * (5 + n_servers) + 4 * n_servers + n_users * n_servers


def encode_state(state, assoc, cfg: ScenarioConfig):
    """Flatten one slot into normalized features in [0, 1].

    Layout (in order): per user [x, y, emd, fresh, history] plus the current
    host one-hot; per server [x, y, compute cap, sync cap]; then the
    user-server Manhattan distances normalized by the area's L1 diameter.
    Positions divide by the area side, skew by its max 2, sample counts by
    fresh_max (history by HISTORY_CAP_FACTOR * fresh_max, clipped).
    """
    side = cfg.area_side
    hist_cap = HISTORY_CAP_FACTOR * cfg.fresh_max
    user_block = np.concatenate(
        [
            state.user_positions / side,
            state.emd_levels[:, None] / 2.0,
            state.fresh_samples[:, None] / cfg.fresh_max,
            np.minimum(state.prev_samples, hist_cap)[:, None] / hist_cap,
            np.asarray(assoc, dtype=float),
        ],
        axis=1,
    )
    server_block = np.concatenate(
        [
            state.server_positions / side,
            state.compute_capacity[:, None] / cfg.compute_capacity_max,
            state.sync_capacity[:, None] / cfg.sync_capacity_max,
        ],
        axis=1,
    )
    dist_block = manhattan(state.user_positions, state.server_positions) / (
        2.0 * side
    )
    return np.concatenate(
        [user_block.ravel(), server_block.ravel(), dist_block.ravel()]
    )


def barrier(x, curvature: float = 10.0, cap: float = 10.0):
    """Logarithmic penalty -(1/curvature) ln(-x) for x < 0, capped at
    ``cap`` (the finite stand-in for the infinite penalty at x >= 0).

    Negative for slack beyond one energy unit, steeply positive as the
    slack vanishes.  Elementwise over arrays.
    """
    x = np.asarray(x, dtype=float)
    safe = np.where(x < 0, -x, 1.0)
    value = np.where(x < 0, -np.log(safe) / curvature, cap)
    return np.minimum(value, cap) if value.ndim else float(min(value, cap))


def reward(objective, compute_slack, sync_slack, curvature=10.0, cap=10.0):
    """Slot reward: objective minus capacity barriers on both budgets.

    Slack is budget minus load; the barrier argument is its negation, so a
    violated budget contributes the cap.  With all slacks exactly one unit
    the barriers vanish and the reward equals the objective.
    """
    penalty = barrier(-np.asarray(compute_slack, dtype=float), curvature, cap)
    penalty = penalty.sum()
    penalty += barrier(-np.asarray(sync_slack, dtype=float), curvature, cap).sum()
    return float(objective - penalty)


def gae(rewards, values, discount: float, lam: float, tail_value: float = 0.0):
    """Truncated generalized advantage estimation over one episode.

    A_t = sum_l (discount * lam)^l * delta_{t+l} with
    delta_t = r_t + discount * V(s_{t+1}) - V(s_t) and V(s_T) = tail_value
    (zero by default: episodes truncate).  Returns (advantages, critic
    targets r_t + discount * V(s_{t+1})).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    next_values = np.append(values[1:], tail_value)
    targets = rewards + discount * next_values
    deltas = targets - values
    advantages = np.empty_like(deltas)
    acc = 0.0
    for t in range(deltas.size - 1, -1, -1):
        acc = deltas[t] + discount * lam * acc
        advantages[t] = acc
    return advantages, targets


def ppo_actor_grad(logits, actions, old_logp, advantages, clip_ratio: float):
    """Mean clipped surrogate and its gradient w.r.t. the logits.

    Per transition the surrogate is min(ratio * A, clamp(ratio) * A) with
    ratio = exp(logp_new - logp_old); the clamped branch has zero gradient
    where the ratio saturates, so gradient flows exactly where the
    unclipped branch governs.  At logp_new == logp_old this reduces to the
    vanilla policy-gradient estimator.
    """
    n_users = np.asarray(actions).shape[1]
    block = logits.shape[1] // n_users
    logp_new, probs = block_log_probs(logits, block, actions)
    ratio = np.exp(logp_new - np.asarray(old_logp, dtype=float))
    adv = np.asarray(advantages, dtype=float)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv
    surrogate = float(np.minimum(unclipped, clipped).mean())
    coef = np.where(unclipped <= clipped, ratio * adv, 0.0) / ratio.size
    dlogits = _logp_grad_to_logits(probs, actions, coef)
    return surrogate, dlogits


def vanilla_actor_grad(logits, actions, advantages, n_users: int):
    """Mean log-prob-weighted-advantage objective and its logit gradient;
    the unclipped estimator used by the plain actor-critic baseline."""
    block = logits.shape[1] // n_users
    logp, probs = block_log_probs(logits, block, actions)
    adv = np.asarray(advantages, dtype=float)
    value = float((logp * adv).mean())
    coef = adv / adv.size
    return value, _logp_grad_to_logits(probs, actions, coef)


def _logp_grad_to_logits(probs, actions, coef):
    """Chain d logp / d logits = onehot - softmax through per-row weights."""
    n, n_users, block = probs.shape
    onehot = np.zeros_like(probs)
    rows = np.arange(n)[:, None]
    cols = np.arange(n_users)[None, :]
    onehot[rows, cols, np.asarray(actions, dtype=int)] = 1.0
    return (coef[:, None, None] * (onehot - probs)).reshape(n, -1)


def critic_grad(values, targets):
    """Mean squared temporal-difference loss and d loss / d values."""
    err = np.asarray(values, dtype=float) - np.asarray(targets, dtype=float)
    return float(0.5 * (err**2).mean()), err / err.size


class PpoAgent:
    """Episode-batched clipped policy gradient over placement actions."""

    gamma_mode = "opt"  # history allocation comes from the convex step

    def __init__(self, config: Config, n_users: int, n_servers: int, rng):
        self.cfg = config.train
        self.n_users = n_users
        self.n_servers = n_servers
        width = self.cfg.hidden_width
        n_feat = feature_length(n_users, n_servers)
        self.actor = init_mlp(
            [n_feat, width, width, n_users * n_servers], rng
        )
        self.critic = init_mlp([n_feat, width, width, 1], rng)
        self._adam_actor = AdamState.for_net(self.actor)
        self._adam_critic = AdamState.for_net(self.critic)
        self._reset_buffers()

    def _reset_buffers(self):
        self._features = []
        self._actions = []
        self._logps = []
        self._values = []
        self._rewards = []
        self._tail_features = None

    def act(self, features, rng):
        """Sample a placement; returns (indices, log prob, value)."""
        logits, _ = forward(self.actor, features)
        indices, logp = softmax_block_sample(
            logits[0], self.n_servers, rng
        )
        value = float(forward(self.critic, features)[0][0, 0])
        return indices, logp, value

    def observe(
        self, features, indices, logp, value, slot_reward,
        next_features=None, done=False,
    ):
        self._features.append(np.asarray(features, dtype=float))
        self._actions.append(np.asarray(indices, dtype=int))
        self._logps.append(logp)
        self._values.append(value)
        self._rewards.append(slot_reward)
        if done and next_features is not None:
            self._tail_features = np.asarray(next_features, dtype=float)

    def _step(self, net, tape, lr, direction, adam_state):
        if self.cfg.optimizer == "adam":
            adam_step(net, tape, adam_state, lr, direction)
        else:
            sgd_step(net, tape, lr, direction)

    def end_episode(self) -> dict:
        """Run the full-batch update epochs on the stored episode."""
        cfg = self.cfg
        x = np.stack(self._features)
        actions = np.stack(self._actions)
        old_logp = np.asarray(self._logps)
        values = np.asarray(self._values)
        rewards = np.asarray(self._rewards)
        tail = 0.0
        if cfg.bootstrap_tail and self._tail_features is not None:
            tail = float(forward(self.critic, self._tail_features)[0][0, 0])
        advantages, targets = gae(
            rewards, values, cfg.discount, cfg.gae_lambda, tail
        )
        if cfg.normalize_advantages:
            advantages = (advantages - advantages.mean()) / (
                advantages.std() + 1e-8
            )
        surrogate = critic_loss = 0.0
        for _ in range(cfg.update_epochs):
            logits, acts = forward(self.actor, x)
            surrogate, dlogits = ppo_actor_grad(
                logits, actions, old_logp, advantages, cfg.clip_ratio
            )
            self._step(
                self.actor,
                backward(self.actor, acts, dlogits),
                cfg.actor_lr,
                +1.0,
                self._adam_actor,
            )
            out, acts = forward(self.critic, x)
            critic_loss, dvalues = critic_grad(out[:, 0], targets)
            self._step(
                self.critic,
                backward(self.critic, acts, dvalues[:, None]),
                cfg.critic_lr,
                -1.0,
                self._adam_critic,
            )
        stats = {
            "mean_reward": float(rewards.mean()),
            "surrogate": surrogate,
            "critic_loss": critic_loss,
        }
        self._reset_buffers()
        return stats
