"""Population-transfer harness: evaluate one checkpoint across agent counts."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from ..config import ConfigError
from ..envs import env_from_spec
from ..rl.checkpoint import Checkpoint, load_checkpoint, model_from_checkpoint
from .metrics import METRIC_FNS, MetricRecord
from .rollout import run_episodes

DEFAULT_METRICS = ("reach_ratio", "dead_ratio", "win_rate", "avg_step_reward")

CSV_HEADER = ("train_tag", "eval_population", "metric", "mean", "std",
              "episodes", "seeds")


def scenario_path(scenario_dir, population: int) -> str:
    return os.path.join(scenario_dir, f"dubins_n{population}.txt")


@dataclass
class TransferReport:
    train_tag: str
    populations: list
    seeds: list
    episodes: int
    records: list = field(default_factory=list)

    def cell(self, metric: str, population: int) -> tuple:
        for r in self.records:
            if r.metric == metric and r.population == population:
                return r.mean, r.std
        raise KeyError((metric, population))

    def rows(self) -> list:
        seen, rows = set(), []
        for r in self.records:
            key = (r.population, r.metric)
            if key in seen:
                continue
            seen.add(key)
            rows.append({
                "train_tag": self.train_tag,
                "eval_population": r.population,
                "metric": r.metric,
                "mean": f"{r.mean:.9g}",
                "std": f"{r.std:.9g}",
                "episodes": self.episodes,
                "seeds": " ".join(str(s) for s in self.seeds),
            })
        rows.sort(key=lambda d: (d["eval_population"], d["metric"]))
        return rows

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_HEADER)
            w.writeheader()
            for row in self.rows():
                w.writerow(row)

    def table(self) -> str:
        lines = [" | ".join(CSV_HEADER)]
        for row in self.rows():
            lines.append(" | ".join(str(row[k]) for k in CSV_HEADER))
        return "\n".join(lines)


def _episode_seeds(seed: int, episodes: int) -> list:
    # distinct layouts per episode; recorded so reports are reproducible
    return [seed * 1_000_003 + e for e in range(episodes)]


def transfer_eval(checkpoint, populations, seeds, episodes: int,
                  scenario_dir="scenarios", metrics=DEFAULT_METRICS,
                  batch: int = 8, train_tag: str | None = None) -> TransferReport:
    """Argmax evaluation of one checkpoint at each population size.

    checkpoint is a path or Checkpoint, or None for the uniform-random
    baseline policy. Each population needs scenarios/dubins_n{N}.txt; the
    shared parameters make the same model evaluable at any n.
    """
    model = None
    if checkpoint is not None:
        ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else \
            load_checkpoint(checkpoint)
        model = model_from_checkpoint(ckpt)
        if train_tag is None:
            train_tag = os.path.splitext(os.path.basename(str(checkpoint)))[0] \
                if not isinstance(checkpoint, Checkpoint) else "checkpoint"
    elif train_tag is None:
        train_tag = "random"
    mode = "argmax" if model is not None else "random"

    report = TransferReport(train_tag=train_tag, populations=list(populations),
                            seeds=list(seeds), episodes=episodes)
    for n in populations:
        path = scenario_path(scenario_dir, n)
        if not os.path.exists(path):
            raise ConfigError(f"population {n} lacks a scenario file: {path}")

        def factory(p=path):
            return env_from_spec({"kind": "dubins", "scenario": p})

        per_seed = {m: [] for m in metrics}
        for seed in seeds:
            rng = np.random.default_rng(seed)
            results = run_episodes(model, factory, _episode_seeds(seed, episodes),
                                   mode=mode, rng=rng, batch=batch)
            for m in metrics:
                per_seed[m].append(METRIC_FNS[m](results))
        for m in metrics:
            vals = np.asarray(per_seed[m], dtype=float)
            mean, std = float(vals.mean()), float(vals.std())
            for seed, v in zip(seeds, vals):
                report.records.append(MetricRecord(
                    metric=m, value=float(v), population=int(n), seed=int(seed),
                    episodes=episodes, mean=mean, std=std))
    return report
