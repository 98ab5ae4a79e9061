"""Shared fixtures: small hand-written domains used across the test modules."""

import pytest

from lazytamp.pddl import parse_domain, parse_problem

# A stream-free pick/place domain: everything is discrete, so it exercises the
# parser, the transition model and the heuristic without any sampling.
BLOCKS_DOMAIN = """\
(define (domain blocks)
  (:predicates (isBlock ?b) (isTable ?t) (on ?b ?t) (holding ?b) (handEmpty))
  (:action pick
    :parameters (?b ?t)
    :precondition (and (isBlock ?b) (isTable ?t) (on ?b ?t) (handEmpty))
    :effect (and (holding ?b) (not (on ?b ?t)) (not (handEmpty))))
  (:action place
    :parameters (?b ?t)
    :precondition (and (isBlock ?b) (isTable ?t) (holding ?b))
    :effect (and (on ?b ?t) (handEmpty) (not (holding ?b)))))
"""

BLOCKS_PROBLEM = """\
(define (problem move-one)
  (:domain blocks)
  (:init (isBlock b0) (isTable t0) (isTable t1) (on b0 t0) (handEmpty))
  (:goal (and (on b0 t1))))
"""

# A two-stream chain domain: `doit` needs sampA(o, a) and sampB(a, b), where
# sB consumes sA's output. Used by the refinement statistics tests with
# scripted samplers.
CHAIN_DOMAIN = """\
(define (domain chain)
  (:predicates (isObj ?o) (pending ?o) (done ?o) (sampA ?o ?a) (sampB ?a ?b))
  (:action doit
    :parameters (?o ?a ?b)
    :precondition (and (isObj ?o) (pending ?o) (sampA ?o ?a) (sampB ?a ?b))
    :effect (and (done ?o) (not (pending ?o))))
  (:stream sA
    :inputs (?o)
    :domain (and (isObj ?o))
    :outputs (?a)
    :certified (and (sampA ?o ?a)))
  (:stream sB
    :inputs (?a)
    :domain (and)
    :outputs (?b)
    :certified (and (sampB ?a ?b))))
"""

CHAIN_PROBLEM = """\
(define (problem chain-one)
  (:domain chain)
  (:init (isObj o0) (pending o0))
  (:goal (and (done o0))))
"""

# Two alternative single-action routes to the goal: `a-act` needs stream sFail
# and `b-act` needs stream sGood. With samplers scripted so sFail always fails
# and sGood always succeeds, this is the minimal feedback-effectiveness domain.
AB_DOMAIN = """\
(define (domain ab)
  (:predicates (isObj ?o) (pending ?o) (done ?o) (viaA ?o ?v) (viaB ?o ?v))
  (:action a-act
    :parameters (?o ?v)
    :precondition (and (isObj ?o) (pending ?o) (viaA ?o ?v))
    :effect (and (done ?o) (not (pending ?o))))
  (:action b-act
    :parameters (?o ?v)
    :precondition (and (isObj ?o) (pending ?o) (viaB ?o ?v))
    :effect (and (done ?o) (not (pending ?o))))
  (:stream sFail
    :inputs (?o)
    :domain (and (isObj ?o))
    :outputs (?v)
    :certified (and (viaA ?o ?v)))
  (:stream sGood
    :inputs (?o)
    :domain (and (isObj ?o))
    :outputs (?v)
    :certified (and (viaB ?o ?v))))
"""

AB_PROBLEM = """\
(define (problem ab-one)
  (:domain ab)
  (:init (isObj o0) (pending o0))
  (:goal (and (done o0))))
"""


class ScriptedSuite:
    """Sampler suite driven by per-stream scripts.

    scripts maps stream name -> list of results; each result is either None
    (failure) or a tuple of output value tuples. A stream whose script runs
    out repeats its last entry. Validation always passes.
    """

    def __init__(self, scripts):
        self.scripts = {k: list(v) for k, v in scripts.items()}
        self.calls = {k: 0 for k in scripts}

    def sample(self, inst, inputs, context, rng):
        name = inst.schema.name
        script = self.scripts[name]
        i = min(self.calls[name], len(script) - 1)
        self.calls[name] += 1
        return script[i]

    def validate(self, fact, values, context):
        return True


class BernoulliSuite:
    """Every stream succeeds independently with probability p per draw."""

    def __init__(self, p):
        self.p = p

    def sample(self, inst, inputs, context, rng):
        if rng.random() < self.p:
            return ((0.0,),)
        return None

    def validate(self, fact, values, context):
        return True


def exhaustive_feasible_lengths(problem, suite, max_depth, refine_passes=30, seed=1):
    """Oracle: enumerate every goal-reaching skeleton up to `max_depth` by
    exhaustive duplicate-pruned BFS, then try to refine each. Returns
    {depth: (number of goal skeletons, number refinable)}."""
    from collections import deque

    from lazytamp.model import LogicalState, apply, fluent_applicable, goal_satisfied
    from lazytamp.refinement import FeasibilityDB, refine
    from lazytamp.search import SearchNode
    from lazytamp.streams import IdGen, certify

    domain = problem.domain
    idgen = IdGen()

    def key(node):
        cg = node.cg
        return frozenset(
            (f.predicate,) + tuple(cg.key_of(a) for a in f.args)
            for f in node.state.facts
        )

    def successors(node):
        out = []
        for action in fluent_applicable(node.state, domain):
            res = certify(action, node.state, node.cg, domain, idgen)
            if res is None:
                continue
            bound, fragment = res
            cg = node.cg.extend(fragment)
            state = apply(node.state, bound)
            new = [f for inst in fragment for f in inst.certified]
            if new:
                state = LogicalState(state.facts | set(new))
            out.append(SearchNode(state, cg, parent=node, action=bound, cost=1.0))
        return out

    root = SearchNode(problem.init)
    closed = {key(root)}
    goals = {}
    queue = deque([root])
    while queue:
        node = queue.popleft()
        if node.depth >= max_depth:
            continue
        for child in successors(node):
            k = key(child)
            if k in closed:
                continue
            closed.add(k)
            if goal_satisfied(child.state, problem.goal):
                goals.setdefault(child.depth, []).append(child)
            if child.depth < max_depth:
                queue.append(child)

    out = {}
    for depth in sorted(goals):
        refinable = 0
        for node in goals[depth]:
            theta = refine(
                node.path(), node.cg, refine_passes, FeasibilityDB(), suite, seed
            )
            refinable += theta is not None
        out[depth] = (len(goals[depth]), refinable)
    return out


@pytest.fixture(scope="session")
def blocks_domain():
    return parse_domain(BLOCKS_DOMAIN)


@pytest.fixture(scope="session")
def blocks_problem(blocks_domain):
    return parse_problem(BLOCKS_PROBLEM, blocks_domain)


@pytest.fixture(scope="session")
def chain_domain():
    return parse_domain(CHAIN_DOMAIN)


@pytest.fixture(scope="session")
def chain_problem(chain_domain):
    return parse_problem(CHAIN_PROBLEM, chain_domain)


@pytest.fixture(scope="session")
def ab_domain():
    return parse_domain(AB_DOMAIN)


@pytest.fixture(scope="session")
def ab_problem(ab_domain):
    return parse_problem(AB_PROBLEM, ab_domain)
