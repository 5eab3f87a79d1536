"""One simulated episode, slot by slot.

Rolls the greedy nearest-placement agent with per-slot optimized history
allocation and prints the record stream the harness would write as JSONL:
objective, utility, and the three energy costs for every slot.
"""

import json

import numpy as np

from diten.config import Config, ScenarioConfig, TrainConfig
from diten.env import DitenEnv
from diten.harness import make_agent, run_episode


def main():
    config = Config(
        ScenarioConfig(),
        TrainConfig(slots_per_episode=12, episodes=1),
    ).validate()
    rng = np.random.default_rng(0)
    env = DitenEnv(config)
    agent = make_agent("nearest", config, env, rng)
    records, _ = run_episode(env, agent, episode=0, rng=rng)

    print(f"{'slot':>4} {'objective':>10} {'utility':>8} "
          f"{'mig':>10} {'syn':>8} {'cmp':>8} feasible")
    for r in records:
        print(f"{r.slot:4d} {r.objective:10.4f} {r.utility_mean:8.4f} "
              f"{r.cost_mig:10.2f} {r.cost_syn:8.2f} {r.cost_cmp:8.2f} "
              f"{r.feasible}")

    print("\nthe same record as one JSONL metric row:")
    print(json.dumps(records[0].json_row()))


if __name__ == "__main__":
    main()
