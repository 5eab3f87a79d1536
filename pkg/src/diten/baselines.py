"""Comparison agents: plain actor-critic, greedy, random, and DDPG.

All agents share the rollout protocol of ``PpoAgent`` (act / observe /
end_episode) so the harness can swap them by tag.  The greedy and random
agents learn nothing; the DDPG agent relaxes the discrete placement into
per-user score vectors and discretizes by argmax.
"""

from __future__ import annotations

import numpy as np

from .config import Config
from .env import nearest_association
from .nn import AdamState, adam_step, backward, forward, init_mlp, sgd_step
from .ppo import (
    PpoAgent,
    critic_grad,
    feature_length,
    gae,
    vanilla_actor_grad,
)

__all__ = [
    "nearest_feasible",
    "random_allocation",
    "ActorCriticAgent",
    "NearestAgent",
    "NearestRandomAgent",
    "DdpgAgent",
]


def nearest_feasible(state, params):
    """Greedy Manhattan-nearest placement with capacity repair.

    Returns (association, ok); ok is False when some user fit nowhere and
    was pinned to its nearest server regardless.
    """
    return nearest_association(state, params)


def random_allocation(rng, n_users: int):
    """Uniform random history-participation vector in [0, 1]^U."""
    return rng.uniform(0.0, 1.0, size=n_users)


class ActorCriticAgent(PpoAgent):
    """Unclipped policy gradient: same nets, one update pass per episode."""

    def end_episode(self) -> dict:
        cfg = self.cfg
        x = np.stack(self._features)
        actions = np.stack(self._actions)
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
        logits, acts = forward(self.actor, x)
        value, dlogits = vanilla_actor_grad(
            logits, actions, advantages, self.n_users
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
            "surrogate": value,
            "critic_loss": critic_loss,
        }
        self._reset_buffers()
        return stats


class NearestAgent:
    """Re-run the greedy nearest-feasible placement every slot."""

    gamma_mode = "opt"

    def __init__(self, env):
        self._env = env

    def act(self, features, rng):
        assoc, _ = nearest_association(self._env.state, self._env.params)
        return assoc.argmax(axis=1), 0.0, 0.0

    def observe(self, *args, **kwargs):
        pass

    def end_episode(self) -> dict:
        return {}


class NearestRandomAgent(NearestAgent):
    """Nearest placement, but the history allocation is drawn uniformly."""

    gamma_mode = "random"


class DdpgAgent:
    """Deterministic relaxed-score policy with replay and target networks.

    The actor emits one score per (user, server); the executed placement is
    the per-user argmax of the noise-perturbed scores, and the critic values
    (state, score-vector) pairs.  Updates draw minibatches from a ring
    buffer and drift target copies by the soft-update factor.
    """

    gamma_mode = "opt"

    def __init__(
        self,
        config: Config,
        n_users: int,
        n_servers: int,
        rng,
        batch_size: int = 64,
        warmup: int = 500,
    ):
        cfg = config.train
        self.cfg = cfg
        self.n_users = n_users
        self.n_servers = n_servers
        self.batch_size = batch_size
        self.warmup = warmup
        width = cfg.hidden_width
        n_feat = feature_length(n_users, n_servers)
        n_act = n_users * n_servers
        self.actor = init_mlp([n_feat, width, width, n_act], rng)
        self.critic = init_mlp([n_feat + n_act, width, width, 1], rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self._adam_actor = AdamState.for_net(self.actor)
        self._adam_critic = AdamState.for_net(self.critic)
        cap = cfg.replay_capacity
        self._states = np.zeros((cap, n_feat))
        self._actions = np.zeros((cap, n_act))
        self._rewards = np.zeros(cap)
        self._next_states = np.zeros((cap, n_feat))
        self._dones = np.zeros(cap)
        self.buffer_size = 0
        self._cursor = 0
        self._update_rng = np.random.default_rng(int(rng.integers(2**63)))
        self._last_action = None

    def act(self, features, rng):
        scores, _ = forward(self.actor, features)
        noisy = scores[0] + rng.normal(
            0.0, self.cfg.score_noise, scores.shape[1]
        )
        indices = noisy.reshape(self.n_users, self.n_servers).argmax(axis=1)
        self._last_action = noisy
        return indices, 0.0, 0.0

    def observe(
        self, features, indices, logp, value, slot_reward,
        next_features=None, done=False,
    ):
        if next_features is None or self._last_action is None:
            return
        self._push(
            np.asarray(features, dtype=float),
            self._last_action,
            slot_reward,
            np.asarray(next_features, dtype=float),
            float(done),
        )
        if self.buffer_size >= self.warmup:
            self._update_once()

    def _push(self, state, action, reward_value, next_state, done):
        i = self._cursor
        self._states[i] = state
        self._actions[i] = action
        self._rewards[i] = reward_value
        self._next_states[i] = next_state
        self._dones[i] = done
        self._cursor = (i + 1) % self._states.shape[0]
        self.buffer_size = min(self.buffer_size + 1, self._states.shape[0])

    def _soft_update(self, target, source):
        tau = self.cfg.soft_update
        for tw, sw in zip(target.weights, source.weights):
            tw *= 1.0 - tau
            tw += tau * sw
        for tb, sb in zip(target.biases, source.biases):
            tb *= 1.0 - tau
            tb += tau * sb

    def _step(self, net, tape, lr, direction, adam_state):
        if self.cfg.optimizer == "adam":
            adam_step(net, tape, adam_state, lr, direction)
        else:
            sgd_step(net, tape, lr, direction)

    def _update_once(self):
        rng = self._update_rng
        idx = rng.integers(0, self.buffer_size, size=self.batch_size)
        s = self._states[idx]
        a = self._actions[idx]
        r = self._rewards[idx]
        s2 = self._next_states[idx]
        done = self._dones[idx]
        a2, _ = forward(self.actor_target, s2)
        q2, _ = forward(self.critic_target, np.concatenate([s2, a2], axis=1))
        targets = r + self.cfg.discount * (1.0 - done) * q2[:, 0]
        q, acts = forward(self.critic, np.concatenate([s, a], axis=1))
        loss, dq = critic_grad(q[:, 0], targets)
        self._step(
            self.critic,
            backward(self.critic, acts, dq[:, None]),
            self.cfg.critic_lr,
            -1.0,
            self._adam_critic,
        )
        # ascend Q(s, actor(s)) through the critic's action inputs
        a_pi, actor_acts = forward(self.actor, s)
        _, critic_acts = forward(
            self.critic, np.concatenate([s, a_pi], axis=1)
        )
        dout = np.full((self.batch_size, 1), 1.0 / self.batch_size)
        dq_da = backward(self.critic, critic_acts, dout).input_grad[
            :, s.shape[1]:
        ]
        self._step(
            self.actor,
            backward(self.actor, actor_acts, dq_da),
            self.cfg.actor_lr,
            +1.0,
            self._adam_actor,
        )
        self._soft_update(self.actor_target, self.actor)
        self._soft_update(self.critic_target, self.critic)
        return loss

    def end_episode(self) -> dict:
        self._last_action = None
        return {}
