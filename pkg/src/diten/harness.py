"""Seeded experiment harness: rollouts, metric files, and comparisons.

One cell = (algorithm, server count, skew level, seed).  A cell runs its
episode budget with every source of randomness drawn from one seeded
Generator, streams one JSONL record per slot, and writes one summary CSV
row per episode plus a manifest keyed by the config digest.  Re-running a
plan with the same seeds reproduces the metric files byte for byte.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .alloc import AllocProblem, solve
from .baselines import (
    ActorCriticAgent,
    DdpgAgent,
    NearestAgent,
    NearestRandomAgent,
    random_allocation,
)
from .config import Config, config_digest
from .env import DitenEnv, association_from_indices
from .ppo import PpoAgent, encode_state, reward

__all__ = [
    "ALGORITHMS",
    "ExperimentPlan",
    "make_agent",
    "run_episode",
    "run_cell",
    "run_plan",
    "compare_algorithms",
    "emit_plot_data",
    "SUMMARY_FIELDS",
]

ALGORITHMS = ("ppo", "a2c", "nearest", "nearest-random", "ddpg")

SUMMARY_FIELDS = (
    "episode",
    "mean_objective",
    "mean_utility",
    "mean_cost_mig",
    "mean_cost_syn",
    "mean_cost_cmp",
    "feasible_fraction",
    "mean_reward",
)


def make_agent(tag: str, config: Config, env: DitenEnv, rng):
    u = config.scenario.n_users
    s = config.scenario.n_servers
    if tag == "ppo":
        return PpoAgent(config, u, s, rng)
    if tag == "a2c":
        return ActorCriticAgent(config, u, s, rng)
    if tag == "nearest":
        return NearestAgent(env)
    if tag == "nearest-random":
        return NearestRandomAgent(env)
    if tag == "ddpg":
        return DdpgAgent(config, u, s, rng)
    raise ValueError(f"unknown algorithm {tag!r}; choose from {ALGORITHMS}")


def run_episode(env: DitenEnv, agent, episode: int, rng, server_template=None):
    """Roll one episode; returns (slot records, agent stats).

    The history allocation is re-optimized every slot unless the agent
    declares random allocation.  Warm starts chain the previous slot's
    solution, which shortens the barrier path without changing optima.
    """
    scenario = env.config.scenario
    train = env.config.train
    state = env.reset(rng, server_state=server_template)
    features = encode_state(state, env.prev_assoc, scenario)
    warm = None
    records = []
    for t in range(train.slots_per_episode):
        indices, logp, value = agent.act(features, rng)
        assoc = association_from_indices(indices, scenario.n_servers)
        if agent.gamma_mode == "random":
            gamma = random_allocation(rng, scenario.n_users)
        else:
            problem = AllocProblem.from_state(
                state, env.params, assoc, env.prev_assoc
            )
            solution = solve(problem, gamma0=warm)
            gamma = solution.gamma
            warm = gamma
        record = env.step(assoc, gamma, rng, episode)
        record.reward = reward(
            record.objective,
            record.compute_slack,
            record.sync_slack,
            train.barrier_curvature,
            train.barrier_cap,
        )
        next_features = encode_state(env.state, env.prev_assoc, scenario)
        agent.observe(
            features, indices, logp, value, record.reward,
            next_features, done=(t == train.slots_per_episode - 1),
        )
        features = next_features
        records.append(record)
    stats = agent.end_episode()
    return records, stats


def _summarize(records, stats) -> dict:
    rows = {
        "episode": records[0].episode,
        "mean_objective": float(np.mean([r.objective for r in records])),
        "mean_utility": float(np.mean([r.utility_mean for r in records])),
        "mean_cost_mig": float(np.mean([r.cost_mig for r in records])),
        "mean_cost_syn": float(np.mean([r.cost_syn for r in records])),
        "mean_cost_cmp": float(np.mean([r.cost_cmp for r in records])),
        "feasible_fraction": float(np.mean([r.feasible for r in records])),
        "mean_reward": float(np.mean([r.reward for r in records])),
    }
    rows.update({k: v for k, v in stats.items() if k != "mean_reward"})
    return rows


def run_cell(
    config: Config,
    algorithm: str,
    seed: int,
    jsonl_path=None,
    summary_path=None,
    progress=None,
):
    """Run one cell; returns the list of per-episode summary dicts."""
    rng = np.random.default_rng(seed)
    env = DitenEnv(config)
    agent = make_agent(algorithm, config, env, rng)
    summaries = []
    server_template = None
    jsonl_file = open(jsonl_path, "w", encoding="utf-8") if jsonl_path else None
    try:
        for episode in range(config.train.episodes):
            records, stats = run_episode(
                env, agent, episode, rng, server_template
            )
            if server_template is None:
                server_template = env.state  # server draw reused across episodes
            if jsonl_file is not None:
                for record in records:
                    jsonl_file.write(json.dumps(record.json_row()) + "\n")
            summaries.append(_summarize(records, stats))
            if progress is not None:
                progress(episode, summaries[-1])
    finally:
        if jsonl_file is not None:
            jsonl_file.close()
    if summary_path is not None:
        with open(summary_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=SUMMARY_FIELDS, extrasaction="ignore"
            )
            writer.writeheader()
            writer.writerows(summaries)
    return summaries


@dataclass
class ExperimentPlan:
    """A sweep over server counts, skew levels, and seeds for one algorithm."""

    config: Config
    algorithm: str = "ppo"
    server_counts: tuple = (15,)
    emd_levels: tuple = (0.2,)
    seeds: tuple = (0,)
    out_dir: Path | None = None

    def cells(self):
        for servers in self.server_counts:
            for emd in self.emd_levels:
                for seed in self.seeds:
                    yield servers, emd, seed


def _cell_prefix(algorithm, servers, emd, seed) -> str:
    return f"{algorithm}_s{servers}_e{emd:g}_seed{seed}"


def run_plan(plan: ExperimentPlan, progress=None, workers: int = 1) -> dict:
    """Execute every cell of a plan; returns (and optionally writes) the
    manifest describing what ran and where the metric files live.

    Cells are independent jobs: ``workers`` > 1 runs them in a bounded
    process pool.  Each cell owns its seed and its files, so the metric
    output is identical either way; the manifest is written after every
    cell has finished.  Per-episode ``progress`` callbacks only stream in
    the sequential case (they do not cross process boundaries).
    """
    if plan.algorithm not in ALGORITHMS:
        raise ValueError(
            f"unknown algorithm {plan.algorithm!r}; choose from {ALGORITHMS}"
        )
    if workers < 1:
        raise ValueError("workers must be >= 1")
    out_dir = Path(plan.out_dir) if plan.out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    cells = []
    for servers, emd, seed in plan.cells():
        cell_config = Config(
            dataclasses.replace(
                plan.config.scenario, n_servers=servers, emd_level=emd
            ),
            dataclasses.replace(plan.config.train),
        ).validate()
        prefix = _cell_prefix(plan.algorithm, servers, emd, seed)
        jsonl_path = out_dir / f"{prefix}.jsonl" if out_dir else None
        summary_path = out_dir / f"{prefix}_summary.csv" if out_dir else None
        jobs.append((cell_config, seed, jsonl_path, summary_path, prefix))
        cells.append(
            {
                "algorithm": plan.algorithm,
                "servers": servers,
                "emd": emd,
                "seed": seed,
                "metrics": jsonl_path.name if jsonl_path else None,
                "summary": summary_path.name if summary_path else None,
                "config_digest": config_digest(cell_config),
            }
        )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(
                    run_cell, config, plan.algorithm, seed, jsonl, summary
                )
                for config, seed, jsonl, summary, _ in jobs
            ]
            for future in futures:
                future.result()
    else:
        for config, seed, jsonl, summary, prefix in jobs:
            cell_progress = None
            if progress is not None:
                cell_progress = lambda ep, row, p=prefix: progress(p, ep, row)
            run_cell(
                config, plan.algorithm, seed, jsonl, summary, cell_progress
            )
    manifest = {
        "package_version": __version__,
        "algorithm": plan.algorithm,
        "episodes": plan.config.train.episodes,
        "slots_per_episode": plan.config.train.slots_per_episode,
        "base_config_digest": config_digest(plan.config),
        "created": datetime.now(timezone.utc).isoformat(),
        "cells": cells,
    }
    if out_dir is not None:
        with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")
    return manifest


def _load_runs(run_dirs):
    """Yield (cell dict, summary rows) from every manifest under the dirs."""
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        with open(run_dir / "manifest.json", "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        for cell in manifest["cells"]:
            if not cell.get("summary"):
                continue
            with open(run_dir / cell["summary"], newline="") as fh:
                rows = [
                    {k: float(v) for k, v in row.items()}
                    for row in csv.DictReader(fh)
                ]
            yield cell, rows


def _final_window_mean(rows, field: str, window: int) -> float:
    tail = rows[-window:] if window else rows
    return float(np.mean([row[field] for row in tail]))


def compare_algorithms(run_dirs, window: int = 100, out_path=None):
    """Final-window mean objective per cell and pairwise lift per algorithm.

    Lift follows the convention (a - b) / |b|.  Returns (means, lifts):
    means maps algorithm -> per-cell rows and an aggregate; lifts is a list
    of (algorithm_a, algorithm_b, lift) over aggregates.  ``out_path``
    additionally writes both tables into one commented CSV.  Algorithms
    must cover the same (servers, emd, seed) cells, otherwise aggregates
    would average different scenarios; a mismatch raises ValueError.
    """
    per_algorithm = {}
    grids = {}
    for cell, rows in _load_runs(run_dirs):
        mean = _final_window_mean(rows, "mean_objective", window)
        per_algorithm.setdefault(cell["algorithm"], []).append(
            {
                "servers": cell["servers"],
                "emd": cell["emd"],
                "seed": cell["seed"],
                "mean_objective": mean,
            }
        )
        grids.setdefault(cell["algorithm"], set()).add(
            (cell["servers"], cell["emd"], cell["seed"])
        )
    if len({frozenset(g) for g in grids.values()}) > 1:
        raise ValueError(
            "algorithms cover different cell grids; compare like with like"
        )
    means = {
        tag: {
            "cells": cells,
            "aggregate": float(
                np.mean([c["mean_objective"] for c in cells])
            ),
        }
        for tag, cells in per_algorithm.items()
    }
    lifts = []
    tags = sorted(means)
    for a in tags:
        for b in tags:
            if a == b:
                continue
            base = means[b]["aggregate"]
            lifts.append(
                (a, b, (means[a]["aggregate"] - base) / abs(base))
            )
    if out_path is not None:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# final-window mean objective (window={window})\n")
            writer = csv.writer(fh)
            writer.writerow(["algorithm", "servers", "emd", "seed",
                             "mean_objective"])
            for tag in tags:
                for cell in means[tag]["cells"]:
                    writer.writerow(
                        [tag, cell["servers"], cell["emd"], cell["seed"],
                         cell["mean_objective"]]
                    )
            fh.write("# lift = (a - b) / |b| over aggregate means\n")
            writer.writerow(["algorithm_a", "algorithm_b", "lift"])
            for row in lifts:
                writer.writerow(row)
    return means, lifts


def emit_plot_data(run_dirs, out_dir, window: int = 100):
    """Write tidy CSVs, one per figure family, from finished runs.

    reward_vs_episode.csv has one row per (cell, episode); the two
    *_vs_servers.csv files hold final-window means aggregated across seeds
    with their standard errors.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    episode_rows = []
    cell_rows = []
    for cell, rows in _load_runs(run_dirs):
        for row in rows:
            episode_rows.append(
                (
                    cell["algorithm"], cell["servers"], cell["emd"],
                    cell["seed"], int(row["episode"]), row["mean_reward"],
                )
            )
        cell_rows.append(
            (
                cell["algorithm"], cell["servers"], cell["emd"], cell["seed"],
                _final_window_mean(rows, "mean_objective", window),
                _final_window_mean(rows, "mean_utility", window),
                _final_window_mean(rows, "mean_cost_mig", window)
                + _final_window_mean(rows, "mean_cost_syn", window)
                + _final_window_mean(rows, "mean_cost_cmp", window),
            )
        )

    with open(out_dir / "reward_vs_episode.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["algorithm", "servers", "emd", "seed", "episode", "mean_reward"]
        )
        writer.writerows(sorted(episode_rows))

    groups = {}
    for tag, servers, emd, seed, obj, util, cost in cell_rows:
        groups.setdefault((tag, servers, emd), []).append((obj, util, cost))

    def stderr(xs):
        xs = np.asarray(xs, dtype=float)
        if xs.size < 2:
            return 0.0
        return float(xs.std(ddof=1) / np.sqrt(xs.size))

    with open(out_dir / "objective_vs_servers.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["algorithm", "servers", "emd", "mean_objective", "stderr"]
        )
        for (tag, servers, emd), vals in sorted(groups.items()):
            objs = [v[0] for v in vals]
            writer.writerow(
                [tag, servers, emd, float(np.mean(objs)), stderr(objs)]
            )

    with open(out_dir / "utility_cost_vs_servers.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "algorithm", "servers", "emd",
                "mean_utility", "stderr_utility",
                "mean_cost", "stderr_cost",
            ]
        )
        for (tag, servers, emd), vals in sorted(groups.items()):
            utils = [v[1] for v in vals]
            costs = [v[2] for v in vals]
            writer.writerow(
                [
                    tag, servers, emd,
                    float(np.mean(utils)), stderr(utils),
                    float(np.mean(costs)), stderr(costs),
                ]
            )
    return {
        "reward_vs_episode": out_dir / "reward_vs_episode.csv",
        "objective_vs_servers": out_dir / "objective_vs_servers.csv",
        "utility_cost_vs_servers": out_dir / "utility_cost_vs_servers.csv",
    }
