"""Acceptance gate: seven end-to-end criteria, one printed pass/fail line each.

Each criterion is a single test; the verdict line is printed straight to the
terminal (bypassing capture) so a full run always shows seven lines.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from lazytamp.model import fluent_applicable
from lazytamp.pddl import parse_problem
from lazytamp.policy import (
    TrainConfig,
    UniformPolicy,
    bc_train,
    forward,
    init_model,
    loss_and_grad,
)
from lazytamp.refinement import (
    FeasibilityDB,
    Solver,
    SolverConfig,
    action_cost,
    phi,
    refine,
    renormalize_policy,
)
from lazytamp.search import SearchNode, f_levints
from lazytamp.streams import EMPTY_CG, IdGen, certify
from lazytamp.domains2d import SamplerSuite2D, figure_scene

import test_policy
import test_search
from conftest import BernoulliSuite, ScriptedSuite, exhaustive_feasible_lengths


@contextmanager
def criterion(capsys, num, desc):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"[acceptance] criterion {num} ({desc}): FAIL")
        raise
    else:
        with capsys.disabled():
            print(f"[acceptance] criterion {num} ({desc}): PASS")


# --- criterion 1: listing fidelity -------------------------------------------


def test_criterion_1_listing_fidelity(capsys):
    with criterion(capsys, 1, "search listing fidelity"):
        t0 = time.perf_counter()
        for graph, expected_pops, expected in test_search.BFS_TRACES:
            for width in ("bfs", None):  # best-first and unbounded beam
                if graph is test_search.GRAPH_D:
                    pops, result = test_search.run_toy_with_key(
                        **graph, key=lambda n: n.name.rstrip("12"), width=width
                    )
                else:
                    pops, result = test_search.run_toy(**graph, width=width)
                assert pops == expected_pops, (graph, width, pops)
                assert (result.name if result else None) == expected
        assert time.perf_counter() - t0 < 1.0


# --- criterion 2: formula suite ----------------------------------------------


def _chain_skeleton(chain_problem):
    domain = chain_problem.domain
    for action in fluent_applicable(chain_problem.init, domain):
        res = certify(action, chain_problem.init, EMPTY_CG, domain, IdGen())
        if res is not None:
            bound, fragment = res
            return bound, EMPTY_CG.extend(fragment)
    raise AssertionError


def _levints_chain(logpi_steps):
    node = SearchNode(None)
    for step in logpi_steps:
        node = SearchNode(None, parent=node, logpi_step=step)
    return node


def test_criterion_2_formulas(capsys, chain_problem):
    with criterion(capsys, 2, "priority and feedback formulas"):
        rng = np.random.default_rng(2024)
        action, cg = _chain_skeleton(chain_problem)
        keys = [cg.key_of_instance(i) for i in action.streams]

        for _ in range(20):
            # phi and 1/phi cost against direct substitution
            db = FeasibilityDB()
            ratios = []
            for key in keys:
                att = int(rng.integers(0, 10))
                succ = int(rng.integers(0, att + 1))
                for _ in range(att):
                    db.attempt(key)
                for _ in range(succ):
                    db.success(key)
                ratios.append((succ + 1.0) / (att + 1.0))
            expected_phi = min(1.0, *ratios)
            got = phi(action, cg, db)
            assert abs(got - expected_phi) <= 1e-12 * expected_phi
            cost = action_cost(action, cg, db)
            assert abs(cost - 1.0 / expected_phi) <= 1e-12 / expected_phi

            # pibar = pi*phi / sum(pi*phi)
            n = int(rng.integers(2, 6))
            pi = rng.dirichlet(np.ones(n))
            phis = rng.uniform(0.05, 1.0, n)
            expected = pi * phis / float(np.sum(pi * phis))
            got = renormalize_policy(pi, phis)
            assert np.allclose(got, expected, rtol=1e-12, atol=0.0)

            # f = d / prod(pibar) along the path
            d = int(rng.integers(1, 7))
            probs = rng.uniform(0.1, 1.0, d)
            node = _levints_chain(np.log(probs))
            expected_f = d / float(np.prod(probs))
            assert abs(f_levints(node) - expected_f) <= 1e-12 * expected_f

        # anchors: unseen phi = 1; pibar = pi when phi == 1; d=2, pi=1/4 -> f=8
        assert phi(action, cg, FeasibilityDB()) == 1.0
        assert renormalize_policy([0.3, 0.7], [1.0, 1.0]) == pytest.approx(
            [0.3, 0.7], rel=1e-12
        )
        node = _levints_chain([math.log(0.5), math.log(0.5)])
        assert abs(f_levints(node) - 8.0) <= 1e-12 * 8.0


# --- criterion 3: feedback scenario ------------------------------------------


def test_criterion_3_feedback_scenario(capsys):
    with criterion(capsys, 3, "blocked-grasp feedback scenario"):
        _, problem = figure_scene()

        # oracle: optimistic skeletons exist from depth 4, but 6 actions is
        # the shortest geometrically refinable length
        by_depth = exhaustive_feasible_lengths(problem, SamplerSuite2D(), 6)
        assert min(by_depth) == 4
        feasible = [d for d, (_, refinable) in by_depth.items() if refinable]
        assert feasible == [6], by_depth

        for priority in ("astar", "levints"):
            policy = UniformPolicy() if priority == "levints" else None
            config = SolverConfig(priority=priority, seed=0)

            # outer iteration 1: the shortest optimistic skeleton ignores the
            # blocked grasp and is refuted by refinement
            probe = Solver(problem, SamplerSuite2D(), config, policy=policy)
            skeleton = probe.search()
            assert skeleton is not None
            assert len(skeleton.path()) == 4
            theta = refine(
                skeleton.path(),
                skeleton.cg,
                config.n_max,
                probe.db,
                probe.suite,
                rng_seed=probe._refine_seed(1),
            )
            assert theta is None
            refuted = [k for k, (a, s) in probe.db.counts.items() if a > 0 and s == 0]
            assert refuted  # the blocked grasp left a zero-success record

            # full solve: valid 6-action plan within 5 outer iterations, < 10 s
            solver = Solver(problem, SamplerSuite2D(), config, policy=policy)
            result = solver.solve()
            assert result.status == "solved", (priority, result.status)
            assert len(result.plan) == 6
            assert 2 <= result.outer_iterations <= 5
            assert result.wall_time < 10.0


# --- criterion 4: refinement statistics --------------------------------------


def test_criterion_4_refinement_statistics(capsys, chain_problem):
    with criterion(capsys, 4, "refinement statistics"):
        t0 = time.perf_counter()
        action, cg = _chain_skeleton(chain_problem)
        kA, kB = [cg.key_of_instance(i) for i in action.streams]

        # trace 1: both streams succeed on the first pass
        db = FeasibilityDB()
        suite = ScriptedSuite({"sA": [((1.0,),)], "sB": [((2.0,),)]})
        assert refine([action], cg, 3, db, suite, rng_seed=0) is not None
        assert db.stats(kA) == (1, 1) and db.stats(kB) == (1, 1)

        # trace 2: sA fails once, then succeeds
        db = FeasibilityDB()
        suite = ScriptedSuite({"sA": [None, ((1.0,),)], "sB": [((2.0,),)]})
        assert refine([action], cg, 2, db, suite, rng_seed=0) is not None
        assert db.stats(kA) == (2, 1) and db.stats(kB) == (1, 1)

        # trace 3: sA always fails; sB is never reached
        db = FeasibilityDB()
        suite = ScriptedSuite({"sA": [None], "sB": [((2.0,),)]})
        assert refine([action], cg, 3, db, suite, rng_seed=0) is None
        assert db.stats(kA) == (3, 0) and db.stats(kB) == (0, 0)

        # with-replacement success-rate bound: p=0.5, k=2, N_max=5
        p, n_max, trials = 0.5, 5, 1000
        expected = 1.0 - (1.0 - p**2) ** n_max
        hits = sum(
            refine([action], cg, n_max, FeasibilityDB(), BernoulliSuite(p), rng_seed=t)
            is not None
            for t in range(trials)
        )
        sigma = math.sqrt(expected * (1.0 - expected) / trials)
        assert abs(hits / trials - expected) <= 3.0 * sigma
        assert time.perf_counter() - t0 < 30.0


# --- criterion 5: policy numerics --------------------------------------------


def test_criterion_5_policy_numerics(capsys, blocks_domain):
    with criterion(capsys, 5, "policy numerics"):
        t0 = time.perf_counter()
        spec = test_policy.FeatureSpec.for_domain(blocks_domain)

        # forward is a distribution
        rng = np.random.default_rng(0)
        model = init_model(spec, layers=2, width=8, seed=0)
        for _ in range(20):
            graph, cands = test_policy._random_case(spec, rng)
            probs = forward(model, graph, cands)
            assert abs(probs.sum() - 1.0) < 1e-9

        # analytic vs central finite-difference gradients, every slice
        rng = np.random.default_rng(9)
        small = init_model(spec, layers=2, width=4, seed=1)
        graph, cands = test_policy._random_case(spec, rng)
        _, grads = loss_and_grad(small, graph, cands, 1)
        eps = 1e-5
        for name in small.params:
            flat = small.params[name].ravel()
            fd = np.zeros(flat.size)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                lp, _ = loss_and_grad(small, graph, cands, 1)
                flat[i] = orig - eps
                lm, _ = loss_and_grad(small, graph, cands, 1)
                flat[i] = orig
                fd[i] = (lp - lm) / (2 * eps)
            err = np.linalg.norm(grads[name].ravel() - fd)
            assert err <= max(1e-4 * np.linalg.norm(fd), 1e-6), (name, err)

        # single-demo behavior cloning reaches < 0.05 nats in 200 epochs
        problem = parse_problem(test_policy.TWO_BLOCKS, blocks_domain)
        demo = test_policy.Demonstration(problem, [], "pick", ("b0", "t0"))
        _, trace = bc_train([demo], TrainConfig(epochs=200, seed=0), spec)
        assert trace[-1] < 0.05

        # candidate-order and node-relabeling invariance, 100 random cases
        test_policy.test_candidate_order_and_relabeling_invariance(spec)
        assert time.perf_counter() - t0 < 60.0


# --- criteria 6 & 7: end-to-end learning effect and reproducibility ----------


def _learning_pipeline(csv_path):
    """The full demo -> train -> held-out benchmark pipeline, from scratch.

    Demonstrations come from 50 small problems (10 per family) solved with
    A*/h_add; the policy trains for 1000 epochs; evaluation covers 100
    held-out problems per family under a 30-second (simulated-clock) timeout.
    Writes the benchmark CSV and returns its summary."""
    from lazytamp.bench import RunConfig, run_suite, summarize, write_csv
    from lazytamp.domains2d import (
        FAMILIES,
        ProblemSpec,
        domain_2d,
        generate_problem,
        scene_to_problem_text,
    )
    from lazytamp.model import Fact
    from lazytamp.policy import FeatureSpec, collect_demos

    domain = domain_2d()
    spec = FeatureSpec.for_domain(domain)

    triples = []
    for family in FAMILIES:
        for seed in range(100, 110):
            pid = f"{family}-{seed}"
            scene, problem = generate_problem(
                ProblemSpec(family, n_blocks=3, n_blockers=1, seed=seed)
            )
            goal = [repr(g) for g in sorted(problem.goal, key=Fact.sort_key)]
            triples.append((pid, scene_to_problem_text(scene, goal, pid), problem))
    demo_config = SolverConfig(search="bfs", priority="astar", timeout=30.0, seed=0)
    demo_pairs, skipped = collect_demos(triples, SamplerSuite2D, demo_config)
    demos = [demo for demo, _ in demo_pairs]
    assert len(demos) >= 100, f"only {len(demos)} demos ({len(skipped)} skipped)"

    model, _ = bc_train(demos, TrainConfig(epochs=1000, seed=0), spec)

    held_out = []
    for family in FAMILIES:
        for seed in range(200, 300):
            _, problem = generate_problem(
                ProblemSpec(family, n_blocks=3, n_blockers=1, seed=seed)
            )
            held_out.append((f"{family}-{seed}", problem))
    configs = [
        RunConfig("beam1-learned", timeout=30.0),
        RunConfig("search-only", timeout=30.0),
        RunConfig("policy-only", timeout=30.0),
    ]
    records = run_suite(configs, held_out, seeds=[0], model=model)
    write_csv(records, csv_path)
    return summarize(records, timeout=30.0)


@pytest.fixture(scope="module")
def learning_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("e2e")
    t0 = time.perf_counter()
    summary = _learning_pipeline(str(out / "runs.csv"))
    return str(out / "runs.csv"), summary, time.perf_counter() - t0


def test_criterion_6_learning_effect(capsys, learning_run):
    with criterion(capsys, 6, "end-to-end learning effect"):
        _, summary, elapsed = learning_run
        beam = summary["beam1-learned"]["solve_rate_mean"]
        search_only = summary["search-only"]["solve_rate_mean"]
        policy_only = summary["policy-only"]["solve_rate_mean"]
        assert beam > search_only, (beam, search_only)
        assert policy_only <= beam, (policy_only, beam)
        assert elapsed < 3600.0


def test_criterion_7_reproducibility(capsys, learning_run, tmp_path):
    with criterion(capsys, 7, "byte-identical reproducibility"):
        first_csv, _, _ = learning_run
        repeat_csv = str(tmp_path / "runs-repeat.csv")
        _learning_pipeline(repeat_csv)
        with open(first_csv, "rb") as fh:
            first = fh.read()
        with open(repeat_csv, "rb") as fh:
            repeat = fh.read()
        assert first == repeat
