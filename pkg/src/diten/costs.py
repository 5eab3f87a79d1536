"""Per-slot energy accounting: migration, sync, compute, and the objective.

All three cost channels are additive over users and attributed to the server
hosting each twin this slot.  Migration pays per bit-meter moved between the
old and new host, sync pays per second-meter of uplink time for fresh data,
and compute pays per participating sample processed.  The objective trades a
mean data utility against squashed per-server energy totals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .utility import data_utility, norm_cost

__all__ = [
    "EnergyParams",
    "CostBreakdown",
    "ConstraintReport",
    "manhattan",
    "shannon_rate",
    "migration_cost",
    "sync_cost",
    "compute_cost",
    "total_cost",
    "objective",
    "check_constraints",
]


@dataclass(frozen=True)
class EnergyParams:
    """Energy rates, radio constants, and objective weights for one scenario."""

    n_mig: float = 1e-4          # energy per bit-meter migrated
    n_syn: float = 1e-1          # energy per second-meter of sync uplink
    n_cmp: float = 1e-7          # compute energy coefficient
    bandwidth_hz: float = 15e3   # W
    tx_power_w: float = 0.2      # P_u
    channel_gain: float = 1.0    # xi
    noise_w: float = 10 ** (-20.4)  # N0 in watts (-174 dBm)
    f0: float = 200.0            # cost squash scale
    beta1: float = 0.3           # utility weight
    beta2: float = 0.7           # cost weight
    bits_per_sample: int = 784
    server_energy_per_sample: float = 50.0
    user_energy_per_sample: float = 10.0

    @classmethod
    def from_config(cls, scenario) -> "EnergyParams":
        return cls(
            n_mig=scenario.mig_energy_per_bit_meter,
            n_syn=scenario.sync_energy_per_sec_meter,
            n_cmp=scenario.cmp_energy_coeff,
            bandwidth_hz=scenario.bandwidth_hz,
            tx_power_w=scenario.tx_power_w,
            channel_gain=scenario.channel_gain,
            noise_w=10 ** ((scenario.noise_dbm - 30.0) / 10.0),
            f0=scenario.norm_scale,
            beta1=scenario.utility_weight,
            beta2=scenario.cost_weight,
            bits_per_sample=scenario.bits_per_sample,
            server_energy_per_sample=scenario.server_energy_per_sample,
            user_energy_per_sample=scenario.user_energy_per_sample,
        )


def shannon_rate(params: EnergyParams) -> float:
    """Uplink rate W * log2(1 + P * xi / N0) in bits per second."""
    snr = params.tx_power_w * params.channel_gain / params.noise_w
    return params.bandwidth_hz * np.log2(1.0 + snr)


def manhattan(a, b):
    """Pairwise L1 distances between rows of a (N, 2) and b (M, 2)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    return np.abs(a[:, None, :] - b[None, :, :]).sum(axis=2)


def _assoc_indices(assoc) -> np.ndarray:
    assoc = np.asarray(assoc)
    return assoc.argmax(axis=1)


def _d_bar(state, d_bar):
    if d_bar is None:
        return state.participating
    return np.asarray(d_bar, dtype=float)


@dataclass(frozen=True)
class CostBreakdown:
    """Per-server energy totals for one slot; arrays of shape (S,)."""

    migration: np.ndarray
    sync: np.ndarray
    compute: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.migration + self.sync + self.compute


def migration_cost(state, params: EnergyParams, assoc, prev_assoc, d_bar=None):
    """Per-server energy of moving twins from last slot's hosts to this slot's.

    A user whose host changed ships its participating samples (in bits) plus
    its twin base payload over the inter-server Manhattan distance; unmoved
    twins cost nothing.  Returns shape (S,), attributed to the new host.
    """
    idx = _assoc_indices(assoc)
    prev_idx = _assoc_indices(prev_assoc)
    hop = manhattan(state.server_positions, state.server_positions)[idx, prev_idx]
    payload_bits = _d_bar(state, d_bar) * params.bits_per_sample + state.twin_sizes
    per_user = params.n_mig * hop * payload_bits
    return np.bincount(idx, weights=per_user, minlength=state.n_servers)


def sync_cost(state, params: EnergyParams, assoc):
    """Per-server energy of uploading each user's fresh samples to its host.

    Only fresh data is transmitted (history already sits at the server).
    Cost is uplink seconds at the Shannon rate times user-server Manhattan
    distance times the sync energy rate.  Returns shape (S,).
    """
    idx = _assoc_indices(assoc)
    dist = manhattan(state.user_positions, state.server_positions)[
        np.arange(state.n_users), idx
    ]
    seconds = state.fresh_samples * params.bits_per_sample / shannon_rate(params)
    per_user = params.n_syn * seconds * dist
    return np.bincount(idx, weights=per_user, minlength=state.n_servers)


def compute_cost(state, params: EnergyParams, assoc, d_bar=None):
    """Per-server energy of one training pass over participating samples.

    Scales with the host CPU power draw and the summed per-sample energy of
    the server and the user device.  Returns shape (S,).
    """
    idx = _assoc_indices(assoc)
    energy = params.server_energy_per_sample + params.user_energy_per_sample
    per_user = params.n_cmp * state.cpu_power[idx] * _d_bar(state, d_bar) * energy
    return np.bincount(idx, weights=per_user, minlength=state.n_servers)


def total_cost(state, params: EnergyParams, assoc, prev_assoc, d_bar=None):
    """All three cost channels for one slot as a CostBreakdown."""
    return CostBreakdown(
        migration=migration_cost(state, params, assoc, prev_assoc, d_bar),
        sync=sync_cost(state, params, assoc),
        compute=compute_cost(state, params, assoc, d_bar),
    )


def objective(state, params: EnergyParams, assoc, prev_assoc, utilities) -> float:
    """Slot objective: beta1 * mean utility - beta2 * mean squashed cost."""
    utilities = np.asarray(utilities, dtype=float)
    cost = total_cost(state, params, assoc, prev_assoc).total
    return float(
        params.beta1 * utilities.sum() / state.n_users
        - params.beta2 * norm_cost(cost, params.f0).sum() / state.n_servers
    )


@dataclass(frozen=True)
class ConstraintReport:
    """Feasibility of one (association, allocation) action."""

    rows_ok: bool            # binary matrix, one host per user
    gamma_ok: bool           # allocation inside [0, 1]
    compute_slack: np.ndarray  # q_s - compute load, per server
    sync_slack: np.ndarray     # p_s - sync load, per server

    @property
    def feasible(self) -> bool:
        return (
            self.rows_ok
            and self.gamma_ok
            and float(self.compute_slack.min()) >= 0.0
            and float(self.sync_slack.min()) >= 0.0
        )


def check_constraints(state, params: EnergyParams, assoc, gamma) -> ConstraintReport:
    """Evaluate every feasibility condition with slack values.

    Capacity slacks use the participating sample counts implied by gamma,
    so the report is self-contained given the pre-action state.
    """
    assoc = np.asarray(assoc)
    gamma = np.asarray(gamma, dtype=float)
    rows_ok = bool(
        np.all((assoc == 0) | (assoc == 1)) and np.all(assoc.sum(axis=1) == 1)
    )
    gamma_ok = bool(np.all(gamma >= 0.0) and np.all(gamma <= 1.0))
    d_bar = state.fresh_samples + gamma * state.prev_samples
    return ConstraintReport(
        rows_ok=rows_ok,
        gamma_ok=gamma_ok,
        compute_slack=state.compute_capacity
        - compute_cost(state, params, assoc, d_bar),
        sync_slack=state.sync_capacity - sync_cost(state, params, assoc),
    )
