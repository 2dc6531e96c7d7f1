"""Experiment harness: preset algorithm configs, (algorithm x game x seed)
grids, per-iteration CSV metrics, cross-seed aggregation, and plot-ready TSV
emission.  Outputs are deterministic: rows are sorted before writing and the
wall-clock column is the only thing that varies between reruns.
"""
from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import os
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import AlgorithmConfig, run
from .games import BimatrixGame, GameError, GameGenSpec, load_game

METRICS_COLUMNS = [
    "run_id", "algorithm", "game", "seed", "iteration", "exploitability",
    "reward_row", "reward_col", "joint_reward", "pop_size_row", "pop_size_col",
    "clipped_row", "clipped_col", "wall_ms",
]

PLOT_METRICS = ("exploitability", "reward_row", "reward_col", "joint_reward")

ENV_JOBS = "METAGAME_FORGE_THREADS"

# Ablations toggle exactly one lever of the full algorithm.
PRESETS = {
    "vanilla_psro": {"variant": "vanilla_psro", "clipping_enabled": False},
    "diversity_psro": {"variant": "diversity_psro", "clipping_enabled": False,
                       "lambda_1": 0.0},
    "sc_psro": {"variant": "sc_psro"},
    "sc_psro_no_diversity": {"variant": "sc_psro", "lambda_d": 0.0},
    "sc_psro_no_lookahead": {"variant": "sc_psro", "lambda_d": 1.0},
    "sc_psro_no_clipping": {"variant": "sc_psro", "clipping_enabled": False},
}


def make_config(preset: str, **overrides) -> AlgorithmConfig:
    if preset not in PRESETS:
        raise GameError(f"unknown algorithm preset {preset!r}")
    fields = dict(PRESETS[preset])
    fields.update(overrides)
    cfg = AlgorithmConfig(**fields)
    cfg.validate()
    return cfg


@dataclass
class ExperimentConfig:
    games: list                      # list of GameGenSpec or file-path strings
    algorithms: list                 # list of (preset-name, overrides-dict)
    mode: str = "self_play"
    seeds: list = field(default_factory=list)
    max_iterations: int = 50
    output_dir: str = "out"
    jobs: int = 1

    def validate(self) -> None:
        if not self.games or not self.algorithms or not self.seeds:
            raise GameError("games, algorithms and seeds must be nonempty")
        if self.max_iterations < 1 or self.jobs < 1:
            raise GameError("max_iterations and jobs must be >= 1")
        for name, overrides in self.algorithms:
            make_config(name, **overrides)


def _parse_seeds(spec) -> list:
    if isinstance(spec, dict):
        return list(range(int(spec["start"]), int(spec["stop"])))
    return [int(s) for s in spec]


def _parse_algorithms(spec) -> list:
    out = []
    for item in spec:
        if isinstance(item, str):
            out.append((item, {}))
        else:
            out.append((item["name"], dict(item.get("overrides", {}))))
    return out


def parse_experiment(doc: dict) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig(
            games=[g if isinstance(g, str) else GameGenSpec(**g)
                   for g in doc["games"]],
            algorithms=_parse_algorithms(doc["algorithms"]),
            mode=doc.get("mode", "self_play"),
            seeds=_parse_seeds(doc["seeds"]),
            max_iterations=int(doc.get("max_iterations", 50)),
            output_dir=doc.get("output_dir", "out"),
            jobs=int(doc.get("jobs", 1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise GameError(f"invalid experiment config: {exc}") from exc
    cfg.validate()
    return cfg


def load_experiment(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameError(f"malformed experiment config: {exc}") from exc
    return parse_experiment(doc)


# ---------------------------------------------------------------------------
# Grid execution

def _game_key(game_spec) -> str:
    if isinstance(game_spec, str):
        return Path(game_spec).stem
    if game_spec.kind == "builtin":
        return game_spec.builtin_name
    parts = [game_spec.kind, f"d{game_spec.dim}"]
    if game_spec.kind == "elo":
        parts.append(f"n{game_spec.noise:g}")
    parts.append(f"g{game_spec.seed}")
    return "_".join(parts)


def _resolve_game(game_spec) -> BimatrixGame:
    if isinstance(game_spec, str):
        return load_game(game_spec)
    return game_spec.build()


def run_id_for(game_spec, algo_name: str, overrides: dict, seed: int) -> str:
    """Stable identity for one grid cell, for cross-run joins."""
    doc = json.dumps(
        {"game": game_spec if isinstance(game_spec, str) else game_spec.__dict__,
         "algorithm": algo_name, "overrides": overrides, "seed": seed},
        sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:12]


def run_cell(game_spec, algo_name: str, overrides: dict, seed: int,
             mode: str, max_iterations: int) -> list:
    """Execute one engine run and return its metric rows (list of dicts)."""
    game = _resolve_game(game_spec)
    cfg = make_config(algo_name, seed=seed, max_iterations=max_iterations,
                      **overrides)
    rid = run_id_for(game_spec, algo_name, overrides, seed)
    gkey = _game_key(game_spec)
    rows = []
    for rep in run(game, cfg, mode):
        rows.append({
            "run_id": rid,
            "algorithm": algo_name,
            "game": gkey,
            "seed": seed,
            "iteration": rep.iteration,
            "exploitability": rep.exploitability,
            "reward_row": rep.reward_row,
            "reward_col": rep.reward_col,
            "joint_reward": rep.reward_row + rep.reward_col,
            "pop_size_row": rep.pop_sizes[0],
            "pop_size_col": rep.pop_sizes[1],
            "clipped_row": rep.clipped_sizes[0],
            "clipped_col": rep.clipped_sizes[1],
            "wall_ms": rep.wall_ms,
        })
    return rows


def _cell_worker(args):
    try:
        return ("ok", args, run_cell(*args))
    except Exception:
        return ("error", args, traceback.format_exc())


def execute_grid(config: ExperimentConfig, log=print) -> tuple[list, int]:
    """Run the full grid; returns (rows, n_failed).  A failing cell is logged
    and skipped, the rest of the grid still runs."""
    config.validate()
    jobs = config.jobs
    env = os.environ.get(ENV_JOBS)
    if env:
        jobs = max(1, int(env))
    cells = [(g, name, overrides, seed, config.mode, config.max_iterations)
             for g in config.games
             for (name, overrides) in config.algorithms
             for seed in config.seeds]
    results = []
    if jobs == 1:
        for cell in cells:
            results.append(_cell_worker(cell))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell_worker, cells))
    rows, failed = [], 0
    for status, cell, outcome in results:
        if status == "ok":
            rows.extend(outcome)
        else:
            failed += 1
            log(f"run failed for cell {cell[:4]}:\n{outcome}")
    rows.sort(key=lambda r: (r["run_id"], r["iteration"]))
    return rows, failed


# ---------------------------------------------------------------------------
# CSV / TSV emission and aggregation

def write_metrics(rows: list, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def read_metrics(path) -> list:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_COLUMNS:
            raise GameError(f"unexpected metrics.csv header in {path}")
        rows = []
        for raw in reader:
            row = dict(raw)
            for key in ("seed", "iteration", "pop_size_row", "pop_size_col",
                        "clipped_row", "clipped_col"):
                row[key] = int(row[key])
            for key in ("exploitability", "reward_row", "reward_col",
                        "joint_reward", "wall_ms"):
                row[key] = float(row[key])
            rows.append(row)
    return rows


def aggregate_rows(rows: list) -> list:
    """Mean/std (population) per (algorithm, game, iteration) across seeds.

    Iterations missing from some runs are aggregated over the runs that have
    them; the count column records the support.
    """
    groups: dict = {}
    for row in rows:
        key = (row["algorithm"], row["game"], row["iteration"])
        groups.setdefault(key, {m: [] for m in PLOT_METRICS})
        for metric in PLOT_METRICS:
            groups[key][metric].append(row[metric])
    out = []
    for (algo, gkey, it) in sorted(groups):
        vals = groups[(algo, gkey, it)]
        rec = {"algorithm": algo, "game": gkey, "iteration": it,
               "count": len(vals[PLOT_METRICS[0]])}
        for metric in PLOT_METRICS:
            arr = np.asarray(vals[metric])
            rec[f"{metric}_mean"] = float(arr.mean())
            rec[f"{metric}_std"] = float(arr.std())
        out.append(rec)
    return out


SUMMARY_COLUMNS = ["algorithm", "game", "iteration", "count"] + [
    f"{m}_{s}" for m in PLOT_METRICS for s in ("mean", "std")]


def write_summary(summary: list, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        writer.writerows(summary)


def write_plot_data(summary: list, out_dir) -> None:
    """One gnuplot-friendly TSV per (metric, game, algorithm)."""
    out_dir = Path(out_dir)
    by_file: dict = {}
    for rec in summary:
        for metric in PLOT_METRICS:
            name = f"{metric}__{rec['game']}__{rec['algorithm']}.tsv"
            by_file.setdefault(name, []).append(
                (rec["iteration"], rec[f"{metric}_mean"], rec[f"{metric}_std"],
                 rec["count"]))
    for name, entries in sorted(by_file.items()):
        with open(out_dir / name, "w", encoding="utf-8") as fh:
            fh.write("iteration\tmean\tstd\tcount\n")
            for it, mean, std, count in sorted(entries):
                fh.write(f"{it}\t{mean}\t{std}\t{count}\n")


def run_experiment(config: ExperimentConfig, log=print) -> int:
    """Execute the grid and write metrics.csv, summary.csv and plot TSVs to
    the output directory.  Returns the number of failed cells."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, failed = execute_grid(config, log=log)
    write_metrics(rows, out_dir / "metrics.csv")
    summary = aggregate_rows(rows)
    write_summary(summary, out_dir / "summary.csv")
    write_plot_data(summary, out_dir)
    return failed
