"""Experiment harness and CLI: reproducibility, schemas, comparisons.

Small cells (3 users, 2 servers, a few slots) exercise the full pipeline:
metric streams must reproduce byte for byte under the same seed, summary
and plot files must keep their schemas, and the CLI must map config
mistakes to exit 2 and runtime failures to exit 3.
"""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from diten.cli import main
from diten.config import Config, ScenarioConfig, TrainConfig
from diten.harness import (
    ALGORITHMS,
    SUMMARY_FIELDS,
    ExperimentPlan,
    compare_algorithms,
    emit_plot_data,
    make_agent,
    run_cell,
    run_plan,
)

ROW_KEYS = [
    "episode", "slot", "objective", "utility_mean",
    "cost_mig", "cost_syn", "cost_cmp", "feasible",
]


def tiny_config(slots=4, episodes=3):
    return Config(
        ScenarioConfig(n_users=3, n_servers=2),
        TrainConfig(slots_per_episode=slots, episodes=episodes,
                    hidden_width=8, update_epochs=1),
    ).validate()


def tiny_plan(out_dir, algorithm="nearest", seeds=(0,), servers=(2,)):
    return ExperimentPlan(
        config=tiny_config(),
        algorithm=algorithm,
        server_counts=servers,
        emd_levels=(0.2,),
        seeds=seeds,
        out_dir=out_dir,
    )


def read_manifest(run_dir):
    with open(Path(run_dir) / "manifest.json") as fh:
        return json.load(fh)


def test_rerun_reproduces_metric_files_byte_for_byte(tmp_path):
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    run_plan(tiny_plan(dir_a, algorithm="ppo"))
    run_plan(tiny_plan(dir_b, algorithm="ppo"))
    manifest = read_manifest(dir_a)
    for cell in manifest["cells"]:
        for key in ("metrics", "summary"):
            blob_a = (dir_a / cell[key]).read_bytes()
            blob_b = (dir_b / cell[key]).read_bytes()
            assert blob_a == blob_b
    # manifests agree except for the wall-clock stamp
    other = read_manifest(dir_b)
    manifest.pop("created"), other.pop("created")
    assert manifest == other


def test_different_seeds_differ(tmp_path):
    summaries_a = run_cell(tiny_config(), "nearest-random", seed=0)
    summaries_b = run_cell(tiny_config(), "nearest-random", seed=1)
    assert summaries_a != summaries_b


def test_worker_pool_matches_sequential_run(tmp_path):
    # cells own their seeds and files, so a bounded pool changes nothing
    dir_seq, dir_par = tmp_path / "seq", tmp_path / "par"
    run_plan(tiny_plan(dir_seq, algorithm="ppo", seeds=(0, 1)))
    run_plan(tiny_plan(dir_par, algorithm="ppo", seeds=(0, 1)), workers=2)
    manifest = read_manifest(dir_seq)
    for cell in manifest["cells"]:
        for key in ("metrics", "summary"):
            assert (dir_seq / cell[key]).read_bytes() == (
                dir_par / cell[key]
            ).read_bytes()
    other = read_manifest(dir_par)
    manifest.pop("created"), other.pop("created")
    assert manifest == other
    with pytest.raises(ValueError, match="workers"):
        run_plan(tiny_plan(tmp_path / "bad"), workers=0)


def test_metric_stream_schema(tmp_path):
    out = tmp_path / "run"
    run_plan(tiny_plan(out))
    manifest = read_manifest(out)
    (cell,) = manifest["cells"]
    lines = (out / cell["metrics"]).read_text().splitlines()
    assert len(lines) == 3 * 4  # episodes x slots
    for line in lines:
        row = json.loads(line)
        assert list(row) == ROW_KEYS
    with open(out / cell["summary"], newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    assert header == list(SUMMARY_FIELDS)
    assert len(rows) == 3
    assert [int(float(r[0])) for r in rows] == [0, 1, 2]


def test_make_agent_covers_every_tag():
    config = tiny_config()
    rng = np.random.default_rng(0)
    from diten.env import DitenEnv

    env = DitenEnv(config)
    for tag in ALGORITHMS:
        agent = make_agent(tag, config, env, rng)
        assert agent.gamma_mode in ("opt", "random")
    with pytest.raises(ValueError):
        make_agent("tabular", config, env, rng)
    with pytest.raises(ValueError):
        run_plan(ExperimentPlan(config=config, algorithm="tabular"))


def test_plan_cell_grid_and_filenames(tmp_path):
    out = tmp_path / "sweep"
    plan = tiny_plan(out, seeds=(0, 1), servers=(2, 3))
    assert list(plan.cells()) == [
        (2, 0.2, 0), (2, 0.2, 1), (3, 0.2, 0), (3, 0.2, 1)
    ]
    manifest = run_plan(plan)
    names = [c["metrics"] for c in manifest["cells"]]
    assert names == [
        "nearest_s2_e0.2_seed0.jsonl", "nearest_s2_e0.2_seed1.jsonl",
        "nearest_s3_e0.2_seed0.jsonl", "nearest_s3_e0.2_seed1.jsonl",
    ]
    for cell in manifest["cells"]:
        assert (out / cell["metrics"]).exists()
        assert (out / cell["summary"]).exists()


def test_compare_lift_convention(tmp_path):
    dir_a, dir_b = tmp_path / "na", tmp_path / "nr"
    run_plan(tiny_plan(dir_a, algorithm="nearest"))
    run_plan(tiny_plan(dir_b, algorithm="nearest-random"))
    out_csv = tmp_path / "cmp.csv"
    means, lifts = compare_algorithms(
        [dir_a, dir_b], window=2, out_path=out_csv
    )
    assert set(means) == {"nearest", "nearest-random"}
    agg = {tag: means[tag]["aggregate"] for tag in means}
    by_pair = {(a, b): lift for a, b, lift in lifts}
    assert set(by_pair) == {
        ("nearest", "nearest-random"), ("nearest-random", "nearest")
    }
    expect = (agg["nearest"] - agg["nearest-random"]) / abs(
        agg["nearest-random"]
    )
    assert by_pair[("nearest", "nearest-random")] == pytest.approx(expect)
    # aggregate is the plain mean of the per-cell window means
    cells = means["nearest"]["cells"]
    assert agg["nearest"] == pytest.approx(
        np.mean([c["mean_objective"] for c in cells])
    )
    text = out_csv.read_text()
    assert "# lift = (a - b) / |b| over aggregate means" in text


def test_compare_rejects_mismatched_cell_grids(tmp_path):
    # aggregates over different scenarios would not be comparable
    dir_a, dir_b = tmp_path / "na", tmp_path / "nr"
    run_plan(tiny_plan(dir_a, algorithm="nearest", servers=(2,)))
    run_plan(tiny_plan(dir_b, algorithm="nearest-random", servers=(2, 3)))
    with pytest.raises(ValueError, match="cell grids"):
        compare_algorithms([dir_a, dir_b])


def test_plot_data_files(tmp_path):
    run_dir = tmp_path / "run"
    run_plan(tiny_plan(run_dir, seeds=(0, 1)))
    out = tmp_path / "plots"
    paths = emit_plot_data([run_dir], out, window=2)
    reward_lines = paths["reward_vs_episode"].read_text().splitlines()
    assert reward_lines[0] == "algorithm,servers,emd,seed,episode,mean_reward"
    assert len(reward_lines) == 1 + 2 * 3  # header + seeds x episodes
    with open(paths["objective_vs_servers"], newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1  # one (algorithm, servers, emd) group
    objs = []
    manifest = read_manifest(run_dir)
    for cell in manifest["cells"]:
        with open(run_dir / cell["summary"], newline="") as fh:
            tail = list(csv.DictReader(fh))[-2:]
        objs.append(np.mean([float(r["mean_objective"]) for r in tail]))
    assert float(rows[0]["mean_objective"]) == pytest.approx(np.mean(objs))
    expect_se = np.std(objs, ddof=1) / np.sqrt(len(objs))
    assert float(rows[0]["stderr"]) == pytest.approx(expect_se)
    with open(paths["utility_cost_vs_servers"], newline="") as fh:
        util_rows = list(csv.DictReader(fh))
    assert len(util_rows) == 1
    assert float(util_rows[0]["mean_cost"]) > 0.0


def test_every_algorithm_runs_a_cell():
    config = tiny_config(slots=3, episodes=1)
    for tag in ALGORITHMS:
        summaries = run_cell(config, tag, seed=0)
        assert len(summaries) == 1
        assert np.isfinite(summaries[0]["mean_objective"])


def test_cli_run_compare_plot_round_trip(tmp_path, capsys):
    cfg = tmp_path / "tiny.yaml"
    cfg.write_text(
        "n_users: 3\nn_servers: 2\nslots_per_episode: 3\nepisodes: 2\n"
        "hidden_width: 8\nupdate_epochs: 1\n"
    )
    run_dir = tmp_path / "out"
    code = main([
        "run", "--config", str(cfg), "--algorithm", "nearest",
        "--seed", "0,1", "--out", str(run_dir), "--quiet",
    ])
    assert code == 0
    assert read_manifest(run_dir)["episodes"] == 2
    assert main(["compare", str(run_dir), "--window", "2"]) == 0
    out = capsys.readouterr().out
    assert "lift = (a - b) / |b|" in out
    plot_dir = tmp_path / "plots"
    code = main(["plot-data", str(run_dir), "--out", str(plot_dir)])
    assert code == 0
    assert (plot_dir / "reward_vs_episode.csv").exists()


def test_cli_exit_codes(tmp_path, capsys):
    bad_cfg = tmp_path / "bad.yaml"
    bad_cfg.write_text("no_such_knob: 1\n")
    code = main(["run", "--config", str(bad_cfg), "--out", str(tmp_path / "x")])
    assert code == 2
    assert "config error" in capsys.readouterr().err

    # nonexistent run directory is a runtime failure, not a usage error
    assert main(["compare", str(tmp_path / "missing")]) == 3

    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_cli_fl_verify_and_alloc_check():
    assert main(["fl-verify", "--instances", "3", "--rounds", "8"]) == 0
    assert main([
        "alloc-check", "--instances", "6", "--seed", "0"
    ]) == 0
