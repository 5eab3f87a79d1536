"""Discrete-time scenario state: users, servers, twins, data, and mobility.

State is stored struct-of-arrays for vectorized cost math; ``EdgeServer``
and ``UserTwin`` are per-entity views for inspection.  Instances are
single-writer: one rollout owns and mutates one state.  All randomness flows
through an explicit numpy Generator, so a seed fixes the whole trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import Config, ScenarioConfig
from .costs import (
    EnergyParams,
    check_constraints,
    manhattan,
    objective,
    shannon_rate,
    total_cost,
)
from .utility import data_utility

__all__ = [
    "EdgeServer",
    "UserTwin",
    "ScenarioState",
    "SlotRecord",
    "sample_scenario",
    "advance_slot",
    "combined_samples",
    "association_from_indices",
    "nearest_association",
    "DitenEnv",
]


@dataclass(frozen=True)
class EdgeServer:
    id: int
    position: np.ndarray
    compute_capacity: float   # per-slot compute energy budget q_s
    sync_capacity: float      # per-slot sync energy budget p_s
    cpu_power: float          # CPU power draw eps_s


@dataclass(frozen=True)
class UserTwin:
    id: int
    position: np.ndarray
    twin_size: float          # base twin payload, bits
    fresh_samples: float      # samples generated this slot
    prev_samples: float       # history carried from the last slot
    emd_level: float          # label skew of this user's data


@dataclass
class ScenarioState:
    """Mutable per-slot snapshot of the whole scenario."""

    config: ScenarioConfig
    slot: int
    user_positions: np.ndarray    # (U, 2)
    twin_sizes: np.ndarray        # (U,)
    fresh_samples: np.ndarray     # (U,)
    prev_samples: np.ndarray      # (U,)
    participating: np.ndarray     # (U,) samples used this slot (set on action)
    emd_levels: np.ndarray        # (U,)
    server_positions: np.ndarray  # (S, 2)
    compute_capacity: np.ndarray  # (S,)
    sync_capacity: np.ndarray     # (S,)
    cpu_power: np.ndarray         # (S,)

    @property
    def n_users(self) -> int:
        return self.user_positions.shape[0]

    @property
    def n_servers(self) -> int:
        return self.server_positions.shape[0]

    def user(self, u: int) -> UserTwin:
        return UserTwin(
            id=u,
            position=self.user_positions[u].copy(),
            twin_size=float(self.twin_sizes[u]),
            fresh_samples=float(self.fresh_samples[u]),
            prev_samples=float(self.prev_samples[u]),
            emd_level=float(self.emd_levels[u]),
        )

    def server(self, s: int) -> EdgeServer:
        return EdgeServer(
            id=s,
            position=self.server_positions[s].copy(),
            compute_capacity=float(self.compute_capacity[s]),
            sync_capacity=float(self.sync_capacity[s]),
            cpu_power=float(self.cpu_power[s]),
        )


def sample_scenario(config: ScenarioConfig, rng) -> ScenarioState:
    """Draw a fresh scenario: positions, capacities, data, and skew levels.

    Users start with one slot's worth of history so the allocation decision
    matters from the first slot.
    """
    config.validate()
    u, s = config.n_users, config.n_servers
    if config.emd_per_user:
        emd_levels = np.asarray(config.emd_per_user, dtype=float)
    else:
        emd_levels = np.full(u, config.emd_level)
    fresh = rng.integers(config.fresh_min, config.fresh_max + 1, size=u)
    prev = rng.integers(config.fresh_min, config.fresh_max + 1, size=u)
    return ScenarioState(
        config=config,
        slot=0,
        user_positions=rng.uniform(0.0, config.area_side, size=(u, 2)),
        twin_sizes=rng.uniform(config.twin_size_min, config.twin_size_max, size=u),
        fresh_samples=fresh.astype(float),
        prev_samples=prev.astype(float),
        participating=fresh.astype(float),
        emd_levels=emd_levels,
        server_positions=rng.uniform(0.0, config.area_side, size=(s, 2)),
        compute_capacity=rng.uniform(
            config.compute_capacity_min, config.compute_capacity_max, size=s
        ),
        sync_capacity=rng.uniform(
            config.sync_capacity_min, config.sync_capacity_max, size=s
        ),
        cpu_power=rng.uniform(config.cpu_power_min, config.cpu_power_max, size=s),
    )


def combined_samples(state: ScenarioState, gamma):
    """Participating samples per user: fresh + gamma * history."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0.0) or np.any(gamma > 1.0):
        raise ValueError("gamma must lie in [0, 1]")
    return state.fresh_samples + gamma * state.prev_samples


def advance_slot(state: ScenarioState, rng) -> ScenarioState:
    """Move users one random-walk step and roll data forward one slot.

    History becomes the samples that actually participated this slot, so
    retained data compounds under high gamma.  Steps have uniform length in
    [0, max_speed] and uniform direction; positions reflect at the area
    boundary.  Mutates and returns ``state``.
    """
    cfg = state.config
    u = state.n_users
    step = rng.uniform(0.0, cfg.max_speed, size=u)
    angle = rng.uniform(0.0, 2.0 * np.pi, size=u)
    pos = state.user_positions + step[:, None] * np.stack(
        [np.cos(angle), np.sin(angle)], axis=1
    )
    # one fold per side suffices: steps are small relative to the area
    pos = np.abs(pos)
    pos = np.where(pos > cfg.area_side, 2.0 * cfg.area_side - pos, pos)
    state.user_positions = pos
    state.prev_samples = state.participating.copy()
    state.fresh_samples = rng.integers(
        cfg.fresh_min, cfg.fresh_max + 1, size=u
    ).astype(float)
    state.participating = state.fresh_samples.copy()
    state.slot += 1
    return state


def association_from_indices(indices, n_servers: int):
    """One-hot (U, S) association matrix from per-user server indices."""
    indices = np.asarray(indices, dtype=int)
    assoc = np.zeros((indices.size, n_servers), dtype=float)
    assoc[np.arange(indices.size), indices] = 1.0
    return assoc


def nearest_association(state: ScenarioState, params: EnergyParams):
    """Greedy nearest-host assignment with capacity repair.

    Users are placed in id order on their Manhattan-nearest server; if a
    server's provisional compute load (at full history participation) or
    sync load would overflow, the next-nearest is tried, ties broken toward
    the lower server id.  Returns (association, ok); ok is False when some
    user fit nowhere and was pinned to its nearest server regardless.
    """
    u, s = state.n_users, state.n_servers
    dist = manhattan(state.user_positions, state.server_positions)
    energy = params.server_energy_per_sample + params.user_energy_per_sample
    d_max = state.fresh_samples + state.prev_samples  # gamma = 1 provisional
    cmp_unit = params.n_cmp * state.cpu_power[None, :] * d_max[:, None] * energy
    seconds = state.fresh_samples * params.bits_per_sample / shannon_rate(params)
    syn_unit = params.n_syn * seconds[:, None] * dist
    cmp_load = np.zeros(s)
    syn_load = np.zeros(s)
    choice = np.empty(u, dtype=int)
    ok = True
    for i in range(u):
        # stable sort keeps the lower id first among equidistant servers
        order = np.argsort(dist[i], kind="stable")
        placed = False
        for j in order:
            fits = (
                cmp_load[j] + cmp_unit[i, j] <= state.compute_capacity[j]
                and syn_load[j] + syn_unit[i, j] <= state.sync_capacity[j]
            )
            if fits:
                choice[i] = j
                placed = True
                break
        if not placed:
            choice[i] = order[0]
            ok = False
        cmp_load[choice[i]] += cmp_unit[i, choice[i]]
        syn_load[choice[i]] += syn_unit[i, choice[i]]
    return association_from_indices(choice, s), ok


@dataclass
class SlotRecord:
    """Metrics of one executed slot; the JSONL row plus rollout extras."""

    episode: int
    slot: int
    objective: float
    utility_mean: float
    cost_mig: float
    cost_syn: float
    cost_cmp: float
    feasible: bool
    reward: float = 0.0
    compute_slack: np.ndarray = field(default=None, repr=False)
    sync_slack: np.ndarray = field(default=None, repr=False)

    def json_row(self) -> dict:
        return {
            "episode": self.episode,
            "slot": self.slot,
            "objective": self.objective,
            "utility_mean": self.utility_mean,
            "cost_mig": self.cost_mig,
            "cost_syn": self.cost_syn,
            "cost_cmp": self.cost_cmp,
            "feasible": self.feasible,
        }


class DitenEnv:
    """Single-writer rollout environment over one scenario.

    ``reset`` draws a scenario and seeds the association with the greedy
    nearest placement; ``step`` prices one (association, gamma) action,
    then advances mobility and data.  Rewards are added by the caller so
    the environment stays agnostic of the learning setup.
    """

    def __init__(self, config: Config):
        self.config = config.validate()
        self.params = EnergyParams.from_config(config.scenario)
        self.state: ScenarioState | None = None
        self.prev_assoc: np.ndarray | None = None

    def reset(self, rng, server_state: ScenarioState | None = None):
        """Start an episode; reuse server placement when one is supplied."""
        state = sample_scenario(self.config.scenario, rng)
        if server_state is not None:
            state.server_positions = server_state.server_positions.copy()
            state.compute_capacity = server_state.compute_capacity.copy()
            state.sync_capacity = server_state.sync_capacity.copy()
            state.cpu_power = server_state.cpu_power.copy()
        self.state = state
        self.prev_assoc, _ = nearest_association(state, self.params)
        return state

    def step(self, assoc, gamma, rng, episode: int = 0) -> SlotRecord:
        """Price the action on the current slot, then advance the scenario."""
        state = self.state
        assoc = np.asarray(assoc, dtype=float)
        state.participating = combined_samples(state, gamma)
        utilities = data_utility(state.emd_levels, state.participating)
        value = objective(state, self.params, assoc, self.prev_assoc, utilities)
        breakdown = total_cost(state, self.params, assoc, self.prev_assoc)
        report = check_constraints(state, self.params, assoc, gamma)
        record = SlotRecord(
            episode=episode,
            slot=state.slot,
            objective=value,
            utility_mean=float(np.clip(utilities, 0.0, 1.0).mean()),
            cost_mig=float(breakdown.migration.sum()),
            cost_syn=float(breakdown.sync.sum()),
            cost_cmp=float(breakdown.compute.sum()),
            feasible=report.feasible,
            compute_slack=report.compute_slack,
            sync_slack=report.sync_slack,
        )
        advance_slot(state, rng)
        self.prev_assoc = assoc
        return record
