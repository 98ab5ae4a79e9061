"""Inner search and solver loop: binding a skeleton's continuous parameters by
evaluating its computation graph, maintaining the feasibility database, and
feeding the resulting statistics back into the outer search's priorities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .model import (
    ActionInstance,
    DomainDefinition,
    Fact,
    GroundedPlan,
    LogicalState,
    ObjectRef,
    ProblemInstance,
    apply,
    fluent_applicable,
    goal_satisfied,
    holds,
)
from .search import (
    SearchNode,
    SearchTrace,
    beam_search,
    best_first_search,
    f_levints,
    h_add,
)
from .streams import ComputationGraph, IdGen, StreamInstance, certify


class SolverTimeout(Exception):
    """Raised internally when the deterministic clock expires."""


class SimClock:
    """Deterministic solver clock. Time advances by a fixed amount per node
    expansion and per stream evaluation, so runs (and their timeout decisions)
    are exactly reproducible; the per-step increments are calibrated to
    laptop-scale real costs."""

    def __init__(self, timeout: float, dt_expansion: float = 0.01, dt_stream: float = 0.002):
        self.timeout = timeout
        self.dt_expansion = dt_expansion
        self.dt_stream = dt_stream
        self.expansions = 0
        self.stream_evals = 0

    @property
    def now(self) -> float:
        return self.expansions * self.dt_expansion + self.stream_evals * self.dt_stream

    def expired(self) -> bool:
        return self.now >= self.timeout

    def check(self):
        if self.expired():
            raise SolverTimeout()

    def tick_expansion(self):
        self.expansions += 1
        self.check()

    def tick_stream(self):
        self.stream_evals += 1
        self.check()


class FeasibilityDB:
    """Per-CG-key success/attempt counts. Counts only ever grow."""

    def __init__(self):
        self.counts = {}

    def attempt(self, key: str):
        self.counts.setdefault(key, [0, 0])[0] += 1

    def success(self, key: str):
        entry = self.counts.setdefault(key, [0, 0])
        entry[1] += 1
        if entry[1] > entry[0]:
            raise AssertionError(f"successes exceed attempts for {key}")

    def stats(self, key: str) -> tuple[int, int]:
        """(attempts, successes) for a key; (0, 0) if unseen."""
        att, succ = self.counts.get(key, (0, 0))
        return att, succ

    def ratio(self, key: str) -> float:
        """Laplace-smoothed success ratio (successes+1)/(attempts+1)."""
        att, succ = self.stats(key)
        return (succ + 1) / (att + 1)

    def __len__(self):
        return len(self.counts)


def phi(action: ActionInstance, cg: ComputationGraph, db: FeasibilityDB) -> float:
    """Feasibility estimate for an action: the minimum Laplace-smoothed success
    ratio over its stream instances; 1 when the action has no streams or none
    of them has been evaluated."""
    value = 1.0
    for inst in action.streams:
        value = min(value, db.ratio(cg.key_of_instance(inst)))
    return value


def action_cost(action: ActionInstance, cg: ComputationGraph, db: FeasibilityDB) -> float:
    """Edge cost 1/phi: unit while optimistic, inflated after failures."""
    return 1.0 / phi(action, cg, db)


def renormalize_policy(pi: Iterable[float], phis: Iterable[float]) -> list[float]:
    """Reweight a policy distribution by feasibility estimates:
    pibar(a) = pi(a) phi(a) / sum pi(a') phi(a')."""
    pi = list(pi)
    phis = list(phis)
    weighted = [p * f for p, f in zip(pi, phis)]
    total = sum(weighted)
    assert total > 0.0, "renormalization degenerate: all phi or pi are zero"
    return [w / total for w in weighted]


# --- skeleton refinement ----------------------------------------------------


def _value_of(obj: ObjectRef, theta: dict):
    if obj.id in theta:
        return theta[obj.id]
    return obj.payload


def refine(
    actions: list[ActionInstance],
    cg: ComputationGraph,
    n_max: int,
    db: FeasibilityDB,
    suite,
    rng_seed: int,
    clock: Optional[SimClock] = None,
    reuse_partial: bool = True,
) -> Optional[dict]:
    """Attempt to ground a skeleton's continuous parameters.

    Runs up to `n_max` passes. Within a pass, each action's stream instances
    are evaluated in computation-graph order; every evaluation counts one
    attempt in the feasibility database and every non-null result one success.
    When a stream fails, the action falls back to a partial grounding recorded
    in an earlier pass if one exists; otherwise the pass dead-ends and the next
    pass restarts from the first action. Returns the complete binding (object
    id -> value tuple) or None.
    """
    instances = [inst for a in actions for inst in a.streams]
    keys = {id(inst): cg.key_of_instance(inst) for inst in instances}
    rngs = {
        id(inst): np.random.default_rng(np.random.SeedSequence([rng_seed, i]))
        for i, inst in enumerate(instances)
    }

    partial = {}  # action index -> grounding of that action's outputs
    d = 0
    while d < n_max:
        theta = {}
        deadend = False
        for idx, action in enumerate(actions):
            ok = True
            theta_a = {}
            for inst in action.streams:
                if clock is not None:
                    clock.tick_stream()
                values = _evaluate(suite, inst, {**theta, **theta_a}, rngs[id(inst)])
                db.attempt(keys[id(inst)])
                if values is None:
                    ok = False
                    break
                db.success(keys[id(inst)])
                for out, val in zip(inst.outputs, values):
                    theta_a[out.id] = tuple(val)
            if ok:
                partial[idx] = dict(theta_a)
                theta.update(theta_a)
            elif reuse_partial and idx in partial:
                theta.update(partial[idx])
            else:
                deadend = True
                break
        if not deadend:
            return theta
        d += 1
    return None


def _evaluate(suite, inst: StreamInstance, theta: dict, rng):
    """Resolve the instance's input and context values and query the sampler."""
    inputs = []
    for obj in inst.inputs:
        val = _value_of(obj, theta)
        inputs.append((obj, val))
    context = []
    for fact in inst.context:
        context.append((fact, tuple(_value_of(a, theta) for a in fact.args)))
    return suite.sample(inst, inputs, context, rng)


# --- top-level solver -------------------------------------------------------


@dataclass
class SolverConfig:
    search: str = "bfs"  # bfs | beam
    priority: str = "astar"  # astar | levints
    width: Optional[int] = None  # beam width; None = unbounded
    n_max: int = 10
    timeout: float = 90.0
    seed: int = 0
    max_chain: int = 8
    reuse_partial: bool = True
    policy_only: bool = False  # greedy single skeleton, refine until timeout
    dt_expansion: float = 0.01
    dt_stream: float = 0.002


@dataclass
class SolveResult:
    status: str  # solved | timeout | unsolvable-optimistically
    wall_time: float
    outer_iterations: int
    expansions: int
    stream_evaluations: int
    plan: Optional[GroundedPlan] = None

    def to_record(self) -> dict:
        rec = {
            "status": self.status,
            "wall_time": self.wall_time,
            "outer_iterations": self.outer_iterations,
            "expansions": self.expansions,
            "stream_evaluations": self.stream_evaluations,
        }
        if self.plan is not None:
            rec["plan"] = [repr(a) for a in self.plan]
        return rec


class Solver:
    """Lazy bi-level search: repeatedly find an action skeleton with the outer
    search, try to refine it, and on failure fold the refinement statistics
    back into the priority function before searching again."""

    def __init__(
        self,
        problem: ProblemInstance,
        suite,
        config: SolverConfig,
        policy: Optional[Callable] = None,
        trace: Optional[SearchTrace] = None,
    ):
        self.problem = problem
        self.domain = problem.domain
        self.suite = suite
        self.config = config
        self.policy = policy
        self.trace = trace
        self.db = FeasibilityDB()
        self.clock = SimClock(config.timeout, config.dt_expansion, config.dt_stream)
        self.idgen = IdGen()
        self.last_skeleton = None
        self._h_cache = {}
        if config.priority == "levints" and policy is None:
            raise ValueError("levints priority requires a policy")

    # -- outer search pieces -------------------------------------------------

    def successors(self, node: SearchNode) -> list[SearchNode]:
        self.clock.tick_expansion()
        admitted = []
        for action in fluent_applicable(node.state, self.domain):
            res = certify(
                action, node.state, node.cg, self.domain, self.idgen, self.config.max_chain
            )
            if res is None:
                continue
            bound, fragment = res
            child_cg = node.cg.extend(fragment)
            state = apply(node.state, bound)
            new_facts = [f for inst in fragment for f in inst.certified]
            if new_facts:
                state = LogicalState(state.facts | set(new_facts))
            admitted.append((bound, child_cg, state))
        if not admitted:
            return []

        phis = [phi(bound, cg, self.db) for bound, cg, _ in admitted]
        if self.config.priority == "levints":
            pi = self.policy(node, [bound for bound, _, _ in admitted], self.problem.goal)
            pibar = renormalize_policy(pi, phis)
        else:
            pibar = [1.0] * len(admitted)

        children = []
        for (bound, cg, state), phi_a, pb in zip(admitted, phis, pibar):
            logpi_step = math.log(pb) if pb > 0.0 else -math.inf
            children.append(
                SearchNode(
                    state,
                    cg,
                    parent=node,
                    action=bound,
                    cost=1.0 / phi_a,
                    logpi_step=logpi_step,
                )
            )
        return children

    def state_key(self, node: SearchNode):
        """Canonical duplicate-detection key: facts with optimistic objects
        replaced by their structural CG keys, so logically identical states
        reached with differently named placeholders collapse."""
        cg = node.cg
        return frozenset(
            (f.predicate,) + tuple(cg.key_of(a) for a in f.args)
            for f in node.state.facts
        )

    def heuristic(self, node: SearchNode) -> float:
        key = self.state_key(node)
        if key not in self._h_cache:
            self._h_cache[key] = h_add(node.state, self.problem.goal, self.domain)
        return self._h_cache[key]

    def priority(self) -> Callable:
        if self.config.priority == "astar":
            return lambda n: n.g + self.heuristic(n)
        return f_levints

    def root(self) -> SearchNode:
        return SearchNode(self.problem.init)

    def search(self) -> Optional[SearchNode]:
        root = self.root()
        is_goal = lambda n: goal_satisfied(n.state, self.problem.goal)
        state_key = self.state_key
        f = self.priority()
        if self.config.search == "beam":
            return beam_search(
                root, self.successors, is_goal, f, self.config.width, state_key, self.trace
            )
        return best_first_search(
            root, self.successors, is_goal, f, state_key, self.trace
        )

    # -- solving -------------------------------------------------------------

    def solve(self) -> SolveResult:
        outer = 0
        status = "timeout"
        plan = None
        self.last_skeleton = None
        try:
            skeleton = None
            while True:
                self.clock.check()
                if skeleton is None or not self.config.policy_only:
                    skeleton = self.search()
                if skeleton is None:
                    status = "unsolvable-optimistically"
                    break
                self.last_skeleton = skeleton
                outer += 1
                n_max = 10**9 if self.config.policy_only else self.config.n_max
                theta = refine(
                    skeleton.path(),
                    skeleton.cg,
                    n_max,
                    self.db,
                    self.suite,
                    rng_seed=self._refine_seed(outer),
                    clock=self.clock,
                    reuse_partial=self.config.reuse_partial,
                )
                if theta is not None:
                    plan = self.ground(skeleton, theta)
                    self.validate(plan, skeleton, theta)
                    status = "solved"
                    break
        except SolverTimeout:
            status = "timeout"
        return SolveResult(
            status=status,
            wall_time=self.clock.now,
            outer_iterations=outer,
            expansions=self.clock.expansions,
            stream_evaluations=self.clock.stream_evals,
            plan=plan,
        )

    def _refine_seed(self, outer: int) -> int:
        return int(
            np.random.SeedSequence([self.config.seed, outer]).generate_state(1)[0]
        )

    def ground(self, skeleton: SearchNode, theta: dict) -> GroundedPlan:
        from dataclasses import replace

        actions = []
        for action in skeleton.path():
            binding = {}
            for var, obj in action.binding.items():
                if obj.id in theta:
                    binding[var] = replace(obj, payload=tuple(theta[obj.id]))
                else:
                    binding[var] = obj
            actions.append(action.with_binding(binding, action.streams))
        return GroundedPlan(tuple(actions))

    def validate(self, plan: GroundedPlan, skeleton: SearchNode, theta: dict):
        """Re-check the returned plan against the model: fluent preconditions
        hold stepwise and every certified fact is satisfied by its bound
        values (via the sampler suite's validators)."""
        state = self.problem.init
        for action in plan:
            if not holds(state, action):
                raise AssertionError(f"plan action {action} not applicable")
            state = apply(state, action)
        for inst in skeleton.cg.instances:
            for fact in inst.certified:
                values = tuple(_value_of(a, theta) for a in fact.args)
                context = [
                    (cf, tuple(_value_of(a, theta) for a in cf.args))
                    for cf in inst.context
                ]
                if not self.suite.validate(fact, values, context):
                    raise AssertionError(f"certified fact {fact} fails validation")


def solve(
    problem: ProblemInstance,
    suite,
    config: SolverConfig,
    policy: Optional[Callable] = None,
) -> SolveResult:
    """Convenience wrapper: build a Solver and run it."""
    return Solver(problem, suite, config, policy=policy).solve()
