"""Digital-twin edge network simulator with learned migration policies.

The package models a fleet of user devices synchronizing digital twins to
edge servers.  Each slot a policy picks the hosting server per user and a
convex solver picks how much training history each twin re-uses; the
environment prices migration, synchronization, and computation against a
freshness utility.  Federated-style aggregation utilities and convergence
checks live in :mod:`diten.flconv`.
"""

__version__ = "0.1.0"

from .alloc import AllocProblem, AllocSolution, brute_force_oracle, solve
from .config import (
    Config,
    ConfigError,
    PROFILES,
    ScenarioConfig,
    TrainConfig,
    apply_profile,
    config_digest,
    default_config,
    load_config,
)
from .costs import (
    CostBreakdown,
    EnergyParams,
    check_constraints,
    objective,
    shannon_rate,
    total_cost,
)
from .env import DitenEnv, ScenarioState, nearest_association, sample_scenario
from .flconv import (
    ConvexShard,
    aggregate,
    centralized_step,
    fed_round,
    random_shards,
    run_rounds,
    verify_bound,
)
from .ppo import PpoAgent, encode_state, feature_length, reward
from .utility import (
    data_utility,
    emd,
    norm_cost,
    skewed_distribution,
    upsilon,
)

__all__ = [
    "__version__",
    "AllocProblem",
    "AllocSolution",
    "brute_force_oracle",
    "solve",
    "Config",
    "ConfigError",
    "PROFILES",
    "ScenarioConfig",
    "TrainConfig",
    "apply_profile",
    "config_digest",
    "default_config",
    "load_config",
    "CostBreakdown",
    "EnergyParams",
    "check_constraints",
    "objective",
    "shannon_rate",
    "total_cost",
    "DitenEnv",
    "ScenarioState",
    "nearest_association",
    "sample_scenario",
    "ConvexShard",
    "aggregate",
    "centralized_step",
    "fed_round",
    "random_shards",
    "run_rounds",
    "verify_bound",
    "PpoAgent",
    "encode_state",
    "feature_length",
    "reward",
    "data_utility",
    "emd",
    "norm_cost",
    "skewed_distribution",
    "upsilon",
]
