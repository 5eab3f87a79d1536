"""Short policy-gradient training run with a learning-curve printout.

Trains the clipped policy-gradient agent under the desk profile on a
reduced episode budget and prints the mean objective in 10-episode bins
next to the greedy baseline measured on the same environment seed.  Pass
--episodes to train longer; the full desk run uses 300.
"""

import argparse
import dataclasses

import numpy as np

from diten.config import Config, apply_profile, default_config
from diten.harness import run_cell


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--episodes", type=int, default=80)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    desk = apply_profile(default_config(), "desk")
    config = Config(
        desk.scenario,
        dataclasses.replace(desk.train, episodes=args.episodes),
    ).validate()

    base_config = Config(
        desk.scenario, dataclasses.replace(desk.train, episodes=20)
    ).validate()
    print(f"baseline: nearest placement with optimized allocation, "
          f"seed {args.seed}")
    base = run_cell(base_config, "nearest", seed=args.seed)
    base_obj = float(np.mean([row["mean_objective"] for row in base]))
    print(f"  mean objective {base_obj:+.4f} over 20 episodes\n")

    print(f"training ppo for {args.episodes} episodes "
          f"(100 slots each), seed {args.seed}")
    rows = run_cell(config, "ppo", seed=args.seed)
    objs = np.array([row["mean_objective"] for row in rows])
    for k in range(0, args.episodes, 10):
        chunk = objs[k:k + 10]
        bar = "#" * max(0, int(40 * (chunk.mean() + 0.3)))
        print(f"  ep {k:3d}-{k + len(chunk) - 1:3d}: "
              f"{chunk.mean():+.4f} {bar}")
    print(f"\nfirst 10 episodes {objs[:10].mean():+.4f}, "
          f"last 10 {objs[-10:].mean():+.4f}, "
          f"baseline {base_obj:+.4f}")


if __name__ == "__main__":
    main()
