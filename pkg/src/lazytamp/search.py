"""Outer skeleton search: the search tree, best-first and beam search, and the
priority functions that order it (A* with the additive delete-relaxation
heuristic, and the Levin-style depth-over-probability priority).

The search routines are generic: they only need a successor function, a goal
test, a priority function and a duplicate-detection key, so the same code runs
over hand-built test graphs and over real skeleton-search nodes.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .model import (
    ActionInstance,
    DomainDefinition,
    Fact,
    LogicalState,
    ObjectRef,
    INITIAL,
)
from .streams import ComputationGraph, EMPTY_CG

INFEASIBLE = math.inf


class SearchNode:
    """A partial skeleton: the path of certified actions from the root.

    `g` accumulates per-action costs (unit, or 1/feasibility once feedback is
    active); `logpi` accumulates log of the renormalized policy probability of
    each step, kept in log space to avoid underflow on deep skeletons.
    """

    __slots__ = ("parent", "action", "state", "cg", "depth", "g", "logpi")

    def __init__(self, state, cg=EMPTY_CG, parent=None, action=None, cost=0.0, logpi_step=0.0):
        self.parent = parent
        self.action = action
        self.state = state
        self.cg = cg
        if parent is None:
            self.depth = 0
            self.g = 0.0
            self.logpi = 0.0
        else:
            self.depth = parent.depth + 1
            self.g = parent.g + cost
            self.logpi = parent.logpi + logpi_step

    def path(self) -> list[ActionInstance]:
        """Actions from the root to this node."""
        out = []
        node = self
        while node.parent is not None:
            out.append(node.action)
            node = node.parent
        out.reverse()
        return out

    def __repr__(self):
        return f"<node d={self.depth} g={self.g:.3g} {self.action}>"


def f_astar(node, h: Callable) -> float:
    """The A* priority g(n) + h(n)."""
    return node.g + h(node)


def f_levints(node) -> float:
    """Depth over accumulated path probability; the root gets 0 and a
    zero-probability path gets the +inf sentinel."""
    if node.depth == 0:
        return 0.0
    if node.logpi == -math.inf:
        return math.inf
    return node.depth * math.exp(-node.logpi)


# --- additive delete-relaxation heuristic -----------------------------------
#
# Facts are projected onto their discrete arguments: optimistic placeholders
# collapse to a wildcard, so relaxed actions need no enumeration over
# continuous objects. Stream-certified preconditions are dropped (optimistic:
# zero cost to satisfy).

WILD = "*"


def _project(fact: Fact):
    return (fact.predicate,) + tuple(
        a.id if a.kind == INITIAL else WILD for a in fact.args
    )


def _compatible(a, b):
    return all(x == y or x == WILD or y == WILD for x, y in zip(a, b))


class _RelaxedFacts:
    """Cost table over projected facts with wildcard-aware lookup.

    Two keys are compatible when they agree at every position where both are
    concrete. Entries are bucketed by their wildcard pattern (the set of WILD
    positions); a lookup against one bucket is then an exact dictionary hit,
    unless the query itself is WILD outside the bucket's pattern, in which
    case that (small) bucket is scanned."""

    def __init__(self):
        self.by_pred = {}  # pred -> {pattern -> {args -> cost}}

    def add(self, key, cost):
        predicate, args = key[0], key[1:]
        pattern = tuple(i for i, a in enumerate(args) if a == WILD)
        bucket = self.by_pred.setdefault(predicate, {}).setdefault(pattern, {})
        old = bucket.get(args)
        if old is None or cost < old:
            bucket[args] = cost
            return True
        return False

    def matches(self, predicate, args):
        """(args, cost) pairs compatible with the (possibly wildcarded) query."""
        for bucket in self.by_pred.get(predicate, {}).values():
            for cand, cost in list(bucket.items()):
                if _compatible(args, cand):
                    yield cand, cost

    def cost(self, predicate, args):
        best = INFEASIBLE
        for pattern, bucket in self.by_pred.get(predicate, {}).items():
            if any(args[i] == WILD for i in range(len(args)) if i not in pattern):
                for cand, c in bucket.items():
                    if c < best and _compatible(args, cand):
                        best = c
            else:
                masked = tuple(
                    WILD if i in pattern else a for i, a in enumerate(args)
                )
                c = bucket.get(masked)
                if c is not None and c < best:
                    best = c
        return best


class RelaxedTask:
    """Ground relaxed actions for a fixed set of static facts.

    Discrete parameters are bound by matching the static preconditions against
    the (state-invariant) static facts once; parameters bound only through
    fluent or stream-certified preconditions stay wildcards. The result is a
    small, state-independent action list shared by every h_add call on the
    same problem."""

    def __init__(self, domain: DomainDefinition, static_facts):
        from .model import _match_all

        statics = LogicalState(static_facts)
        self.ground = []
        seen = set()
        for schema in sorted(domain.actions, key=lambda a: a.name):
            for binding in _match_all(schema.pre_static, statics, {}):
                pre = tuple(
                    sorted(self._key(t, binding) for t in schema.pre_fluent)
                )
                adds = tuple(sorted(self._key(t, binding) for t in schema.adds))
                if (pre, adds) not in seen:
                    seen.add((pre, adds))
                    self.ground.append((pre, adds))

    @staticmethod
    def _key(tpl: FactTemplate, binding: dict):
        out = []
        for a in tpl.args:
            if a.startswith("?"):
                obj = binding.get(a)
                out.append(obj.id if obj is not None else WILD)
            else:
                out.append(a)
        return (tpl.predicate,) + tuple(out)


_relaxed_tasks = {}


def _relaxed_task(domain: DomainDefinition, state: LogicalState) -> RelaxedTask:
    # certified facts are static too, but they are dropped from relaxed
    # preconditions, so they must not perturb the cache key
    statics = frozenset(
        f
        for f in state.facts
        if not domain.is_fluent(f.predicate)
        and f.predicate not in domain.certified_predicates
    )
    key = (id(domain), statics)
    if key not in _relaxed_tasks:
        _relaxed_tasks[key] = RelaxedTask(domain, statics)
    return _relaxed_tasks[key]


def h_add(state: LogicalState, goal: Iterable[Fact], domain: DomainDefinition) -> float:
    """Additive heuristic: fixpoint of cost(f) = 0 for f in state, else
    min over relaxed achievers of 1 + sum of precondition costs; the result is
    the sum over goal facts. Returns math.inf when some goal fact has no
    relaxed achiever."""
    task = _relaxed_task(domain, state)
    table = _RelaxedFacts()
    for fact in state:
        table.add(_project(fact), 0.0)

    changed = True
    while changed:
        changed = False
        for pre, adds in task.ground:
            total = 0.0
            for key in pre:
                c = table.cost(key[0], key[1:])
                if c == INFEASIBLE:
                    total = INFEASIBLE
                    break
                total += c
            if total == INFEASIBLE:
                continue
            cost = 1.0 + total
            for key in adds:
                if table.add(key, cost):
                    changed = True

    total = 0.0
    for fact in sorted(goal, key=Fact.sort_key):
        projected = _project(fact)
        c = table.cost(projected[0], projected[1:])
        if c == INFEASIBLE:
            return INFEASIBLE
        total += c
    return total


# --- search routines --------------------------------------------------------


class SearchTrace:
    """Optional per-run expansion log (JSON-lines friendly records)."""

    def __init__(self):
        self.records = []

    def record(self, node, f_value):
        self.records.append(
            {
                "depth": node.depth,
                "f": f_value,
                "action": repr(node.action) if node.action is not None else None,
                "state_hash": hash(node.state) if hasattr(node, "state") else None,
            }
        )

    def dump(self) -> str:
        return "\n".join(json.dumps(r) for r in self.records)


def best_first_search(
    root,
    successors: Callable,
    is_goal: Callable,
    f: Callable,
    state_key: Callable,
    trace: Optional[SearchTrace] = None,
    on_pop: Optional[Callable] = None,
):
    """Best-first search: pop the frontier node with minimum f (ties broken by
    lower depth, then insertion order), return it as soon as its state
    satisfies the goal, prune duplicate states via a closed set, and otherwise
    push its successors. Returns None when the frontier empties."""
    counter = itertools.count()
    frontier = [(f(root), root.depth, next(counter), root)]
    closed = set()
    while frontier:
        fval, _, _, node = heapq.heappop(frontier)
        if on_pop is not None:
            on_pop(node, fval)
        if is_goal(node):
            return node
        key = state_key(node)
        if key in closed:
            continue
        if trace is not None:
            trace.record(node, fval)
        for child in successors(node):
            heapq.heappush(frontier, (f(child), child.depth, next(counter), child))
        closed.add(key)
    return None


def beam_search(
    root,
    successors: Callable,
    is_goal: Callable,
    f: Callable,
    width,
    state_key: Callable,
    trace: Optional[SearchTrace] = None,
    on_pop: Optional[Callable] = None,
):
    """Beam search: repeatedly select the (up to) `width` lowest-f frontier
    nodes, drop the rest of the frontier, and expand the selected nodes in
    order. `width=None` means unbounded (keep the whole frontier). Goal and
    closed-set checks mirror best_first_search."""
    if width is not None and width < 1:
        raise ValueError("beam width must be >= 1")
    counter = itertools.count()
    frontier = [(f(root), root.depth, next(counter), root)]
    closed = set()
    while frontier:
        selected = []
        while frontier and (width is None or len(selected) < width):
            selected.append(heapq.heappop(frontier))
        frontier = []
        for fval, _, _, node in selected:
            if on_pop is not None:
                on_pop(node, fval)
            if is_goal(node):
                return node
            key = state_key(node)
            if key in closed:
                continue
            if trace is not None:
                trace.record(node, fval)
            for child in successors(node):
                heapq.heappush(
                    frontier, (f(child), child.depth, next(counter), child)
                )
            closed.add(key)
    return None
