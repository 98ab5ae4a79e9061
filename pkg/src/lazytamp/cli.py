"""Command-line entry point: problem generation, solving, demonstration
collection, policy training and benchmarking for the built-in 2D tabletop
domain."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .bench import RunConfig, run_suite, summarize, write_csv, write_summary
from .domains2d import (
    FAMILIES,
    ProblemSpec,
    SamplerSuite2D,
    domain_2d,
    generate_problem,
    scene_to_problem_text,
)
from .pddl import parse_problem, serialize_plan
from .policy import (
    BoltzmannPolicy,
    FeatureSpec,
    LearnedPolicy,
    TrainConfig,
    UniformPolicy,
    bc_train,
    collect_demos,
    demonstration_from_json,
    load_model,
    save_model,
)
from .refinement import Solver, SolverConfig


def _gen_specs(families, count, n_blocks, n_blockers, seed0):
    for family in families:
        for i in range(count):
            yield ProblemSpec(
                family, n_blocks=n_blocks, n_blockers=n_blockers, seed=seed0 + i
            )


def _generate(specs):
    """(problem_id, scene, problem_text, problem) for each spec."""
    out = []
    for spec in specs:
        scene, problem = generate_problem(spec)
        pid = f"{spec.family}-{spec.seed}"
        text = scene_to_problem_text(
            scene, [repr(g) for g in sorted(problem.goal, key=lambda f: f.sort_key())], pid
        )
        out.append((pid, scene, text, problem))
    return out


def cmd_gen(args):
    from .domains2d import DOMAIN_TEXT

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "tabletop-2d.dom"), "w") as fh:
        fh.write(DOMAIN_TEXT)
    specs = _gen_specs(args.families, args.count, args.n_blocks, args.n_blockers, args.seed)
    for pid, scene, text, _ in _generate(specs):
        with open(os.path.join(args.out, pid + ".scene.json"), "w") as fh:
            fh.write(scene.to_json() + "\n")
        with open(os.path.join(args.out, pid + ".prob"), "w") as fh:
            fh.write(text)
        print(pid)
    return 0


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        search=args.search,
        priority=args.priority,
        width=args.width,
        n_max=args.n_max,
        timeout=args.timeout,
        seed=args.seed,
        policy_only=args.policy_only,
    )


def _policy(args, problem):
    if args.policy == "none":
        return None
    if args.policy == "uniform":
        return UniformPolicy()
    if args.policy == "boltzmann":
        return BoltzmannPolicy(problem.domain)
    model = load_model(args.model, problem.domain)
    return LearnedPolicy(model, problem)


def cmd_solve(args):
    with open(args.problem) as fh:
        problem = parse_problem(fh.read(), domain_2d(), origin=args.problem)
    solver = Solver(problem, SamplerSuite2D(), _solver_config(args), policy=_policy(args, problem))
    result = solver.solve()
    print(json.dumps(result.to_record(), indent=2))
    if result.plan is not None and args.plan_out:
        with open(args.plan_out, "w") as fh:
            fh.write(serialize_plan(result.plan))
    if args.dot and solver.last_skeleton is not None:
        with open(args.dot, "w") as fh:
            fh.write(solver.last_skeleton.cg.to_dot())
    return 0 if result.status == "solved" else 1


def cmd_demos(args):
    specs = _gen_specs(args.families, args.count, args.n_blocks, args.n_blockers, args.seed)
    problems = [(pid, text, problem) for pid, _, text, problem in _generate(specs)]
    config = SolverConfig(search="bfs", priority="astar", timeout=args.timeout, seed=args.seed)
    demos, skipped = collect_demos(problems, SamplerSuite2D, config)
    with open(args.out, "w") as fh:
        for demo, text in demos:
            fh.write(demo.to_json(text) + "\n")
    print(f"wrote {len(demos)} demonstrations to {args.out} ({len(skipped)} problems skipped)")
    return 0


def cmd_train(args):
    domain = domain_2d()
    spec = FeatureSpec.for_domain(domain)
    cache = {}
    demos = []
    with open(args.demos) as fh:
        for line in fh:
            if line.strip():
                demos.append(demonstration_from_json(line, domain, cache))
    config = TrainConfig(
        layers=args.layers,
        width=args.width,
        learning_rate=args.lr,
        epochs=args.epochs,
        seed=args.seed,
    )
    model, trace = bc_train(demos, config, spec)
    save_model(model, args.out)
    print(
        f"trained on {len(demos)} demos: loss {trace[0]:.4f} -> {trace[-1]:.4f}; "
        f"model written to {args.out}"
    )
    return 0


def cmd_bench(args):
    os.makedirs(args.out, exist_ok=True)
    specs = _gen_specs(args.families, args.count, args.n_blocks, args.n_blockers, args.seed)
    problems = [(pid, problem) for pid, _, _, problem in _generate(specs)]
    model = load_model(args.model, domain_2d()) if args.model else None
    configs = [RunConfig(name, timeout=args.timeout) for name in args.configs]
    records = run_suite(
        configs,
        problems,
        seeds=list(range(args.seeds)),
        model=model,
        progress=(lambda r: print(r.csv_row())) if args.verbose else None,
    )
    write_csv(records, os.path.join(args.out, "runs.csv"))
    write_summary(summarize(records, args.timeout), os.path.join(args.out, "summary.json"))
    print(f"wrote {len(records)} runs to {args.out}/runs.csv")
    return 0


def _add_gen_args(p):
    p.add_argument("--families", nargs="+", default=list(FAMILIES), choices=FAMILIES)
    p.add_argument("--count", type=int, default=10, help="problems per family")
    p.add_argument("--n-blocks", type=int, default=3)
    p.add_argument("--n-blockers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lazytamp",
        description="Lazy bi-level task-and-motion planning on a 2D tabletop domain.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate problem instances")
    _add_gen_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve a problem file")
    p.add_argument("problem", help="problem file")
    p.add_argument("--search", choices=("bfs", "beam"), default="bfs")
    p.add_argument("--priority", choices=("astar", "levints"), default="astar")
    p.add_argument("--width", type=int, default=None, help="beam width")
    p.add_argument("--policy", choices=("none", "uniform", "boltzmann", "learned"), default="none")
    p.add_argument("--model", help="model file for --policy learned")
    p.add_argument("--policy-only", action="store_true")
    p.add_argument("--n-max", type=int, default=10)
    p.add_argument("--timeout", type=float, default=90.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plan-out", help="write the plan here")
    p.add_argument("--dot", help="write the final skeleton's computation graph (DOT) here")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("demos", help="collect behavior-cloning demonstrations")
    _add_gen_args(p)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--out", required=True, help="output JSON-lines file")
    p.set_defaults(func=cmd_demos)

    p = sub.add_parser("train", help="train a guidance policy on demonstrations")
    p.add_argument("--demos", required=True)
    p.add_argument("--out", required=True, help="model output file")
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="run benchmark suites")
    _add_gen_args(p)
    p.add_argument("--configs", nargs="+", default=["astar-bfs", "levints-uniform"])
    p.add_argument("--seeds", type=int, default=3, help="number of solver seeds")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--model", help="trained model for learned configurations")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
