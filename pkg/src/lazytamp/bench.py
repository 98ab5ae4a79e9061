"""Benchmark harness: run solver configurations over problem suites, write a
per-run CSV and a summary JSON. All output is deterministic (the solver clock
is simulated), so a rerun of the same suite is byte-identical.
"""

from __future__ import annotations

import json
import math
import traceback
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .domains2d import SamplerSuite2D, domain_2d
from .model import ProblemInstance
from .policy import BoltzmannPolicy, LearnedPolicy, PolicyModel, UniformPolicy
from .refinement import Solver, SolverConfig

CSV_COLUMNS = (
    "config",
    "problem_id",
    "seed",
    "status",
    "wall_time_s",
    "expansions",
    "stream_evals",
    "outer_iters",
    "plan_len",
)

# named solver configurations; "learned" entries need a trained model
CONFIG_NAMES = (
    "astar-bfs",
    "levints-uniform",
    "levints-boltzmann",
    "levints-learned",
    "beam1-learned",
    "policy-only",
    "search-only",
)


@dataclass
class RunConfig:
    """One named solver configuration plus shared run parameters."""

    name: str
    timeout: float = 30.0
    n_max: int = 10
    beam_width: Optional[int] = None

    def solver_config(self, seed: int) -> SolverConfig:
        base = dict(n_max=self.n_max, timeout=self.timeout, seed=seed)
        if self.name == "astar-bfs":
            return SolverConfig(search="bfs", priority="astar", **base)
        if self.name in ("levints-uniform", "search-only"):
            return SolverConfig(search="bfs", priority="levints", **base)
        if self.name == "levints-boltzmann":
            return SolverConfig(search="bfs", priority="levints", **base)
        if self.name == "levints-learned":
            return SolverConfig(search="bfs", priority="levints", **base)
        if self.name == "beam1-learned":
            return SolverConfig(search="beam", priority="levints", width=1, **base)
        if self.name == "policy-only":
            return SolverConfig(
                search="beam", priority="levints", width=1, policy_only=True, **base
            )
        raise ValueError(f"unknown configuration {self.name!r}")

    def policy(self, problem: ProblemInstance, model: Optional[PolicyModel]):
        if self.name in ("levints-uniform", "search-only"):
            return UniformPolicy()
        if self.name == "levints-boltzmann":
            return BoltzmannPolicy(problem.domain)
        if self.name in ("levints-learned", "beam1-learned", "policy-only"):
            if model is None:
                raise ValueError(f"configuration {self.name!r} requires a model")
            return LearnedPolicy(model, problem)
        return None


@dataclass
class RunRecord:
    config: str
    problem_id: str
    seed: int
    status: str
    wall_time_s: float
    expansions: int
    stream_evals: int
    outer_iters: int
    plan_len: Optional[int]

    def csv_row(self) -> str:
        plan_len = "" if self.plan_len is None else str(self.plan_len)
        return ",".join(
            [
                self.config,
                self.problem_id,
                str(self.seed),
                self.status,
                "%.6f" % self.wall_time_s,
                str(self.expansions),
                str(self.stream_evals),
                str(self.outer_iters),
                plan_len,
            ]
        )


def run_one(
    run_config: RunConfig,
    problem_id: str,
    problem: ProblemInstance,
    seed: int,
    model: Optional[PolicyModel] = None,
    suite=None,
) -> RunRecord:
    """Run one solver configuration on one problem. Any crash inside the
    solver is caught and reported as status=error."""
    suite = suite if suite is not None else SamplerSuite2D()
    try:
        config = run_config.solver_config(seed)
        policy = run_config.policy(problem, model)
        solver = Solver(problem, suite, config, policy=policy)
        result = solver.solve()
        return RunRecord(
            config=run_config.name,
            problem_id=problem_id,
            seed=seed,
            status=result.status,
            wall_time_s=result.wall_time,
            expansions=result.expansions,
            stream_evals=result.stream_evaluations,
            outer_iters=result.outer_iterations,
            plan_len=len(result.plan) if result.plan is not None else None,
        )
    except Exception:
        traceback.print_exc()
        return RunRecord(
            config=run_config.name,
            problem_id=problem_id,
            seed=seed,
            status="error",
            wall_time_s=0.0,
            expansions=0,
            stream_evals=0,
            outer_iters=0,
            plan_len=None,
        )


def run_suite(
    configs: Iterable[RunConfig],
    problems: Iterable[tuple[str, ProblemInstance]],
    seeds: Iterable[int],
    model: Optional[PolicyModel] = None,
    progress: Optional[Callable] = None,
) -> list[RunRecord]:
    """Cartesian product of configurations x problems x seeds, in deterministic
    order."""
    records = []
    problems = list(problems)
    for run_config in configs:
        for problem_id, problem in problems:
            for seed in seeds:
                record = run_one(run_config, problem_id, problem, seed, model)
                records.append(record)
                if progress is not None:
                    progress(record)
    return records


def write_csv(records: Iterable[RunRecord], path: str):
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in records:
            fh.write(r.csv_row() + "\n")


def read_csv(path: str) -> list[RunRecord]:
    records = []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            records.append(
                RunRecord(
                    config=parts[0],
                    problem_id=parts[1],
                    seed=int(parts[2]),
                    status=parts[3],
                    wall_time_s=float(parts[4]),
                    expansions=int(parts[5]),
                    stream_evals=int(parts[6]),
                    outer_iters=int(parts[7]),
                    plan_len=int(parts[8]) if parts[8] else None,
                )
            )
    return records


def summarize(records: Iterable[RunRecord], timeout: float) -> dict:
    """Per-configuration summary: solve rate (mean and population std across
    seeds), mean time over solved runs, and a solve-rate-over-time curve at
    one-second resolution."""
    by_config = {}
    for r in records:
        by_config.setdefault(r.config, []).append(r)

    summary = {}
    horizon = int(math.ceil(timeout))
    for name in sorted(by_config):
        runs = by_config[name]
        by_seed = {}
        for r in runs:
            by_seed.setdefault(r.seed, []).append(r)
        per_seed_rates = [
            sum(1 for r in group if r.status == "solved") / len(group)
            for _, group in sorted(by_seed.items())
        ]
        solved_times = [r.wall_time_s for r in runs if r.status == "solved"]
        curve = [
            sum(
                1
                for r in runs
                if r.status == "solved" and r.wall_time_s <= t
            )
            / len(runs)
            for t in range(horizon + 1)
        ]
        summary[name] = {
            "runs": len(runs),
            "solve_rate_mean": float(np.mean(per_seed_rates)),
            "solve_rate_std": float(np.std(per_seed_rates)),
            "mean_solve_time_s": float(np.mean(solved_times)) if solved_times else None,
            "solve_rate_curve": curve,
        }
    return summary


def write_summary(summary: dict, path: str):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
