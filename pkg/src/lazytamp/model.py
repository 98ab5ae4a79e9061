"""Core planning model: objects, facts, logical states, action schemas and transitions.

Everything here is immutable. Continuous values ride along as object payloads;
placeholders minted during lazy stream instantiation are "optimistic" objects
that carry no payload until refinement binds them.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

INITIAL = "initial"
OPTIMISTIC = "optimistic"


@dataclass(frozen=True, eq=False)
class ObjectRef:
    """A planning object, identified by its interned symbol: two references
    with the same id denote the same object (equality and hashing ignore the
    attached payload). `slot` records the stream output slot that typed an
    optimistic object (e.g. "grasp.g"); `payload` holds the continuous value of
    a grounded object."""

    id: str
    kind: str = INITIAL
    slot: Optional[str] = None
    payload: Optional[tuple[float, ...]] = None
    # cache slot for the canonical producing-sub-graph key; an optimistic
    # object has a single producer for its whole lifetime, so the key is
    # intrinsic to the reference
    _cgkey: Optional[str] = field(default=None, compare=False, repr=False)

    def __eq__(self, other):
        return isinstance(other, ObjectRef) and self.id == other.id

    def __hash__(self):
        return hash(self.id)

    def __repr__(self):
        return self.id


@dataclass(frozen=True)
class Fact:
    """A ground (or optimistically ground) predicate atom."""

    predicate: str
    args: tuple[ObjectRef, ...]
    _key: Optional[tuple] = field(default=None, compare=False, repr=False)

    def sort_key(self):
        if self._key is None:
            object.__setattr__(
                self, "_key", (self.predicate,) + tuple(a.id for a in self.args)
            )
        return self._key

    def __repr__(self):
        return "(%s)" % " ".join([self.predicate] + [a.id for a in self.args])


class LogicalState:
    """An immutable set of facts with set semantics and a canonical hash."""

    __slots__ = ("facts", "_hash", "_sorted", "_by_pred")

    def __init__(self, facts: Iterable[Fact]):
        object.__setattr__(self, "facts", frozenset(facts))
        object.__setattr__(self, "_hash", hash(self.facts))
        object.__setattr__(self, "_sorted", None)
        object.__setattr__(self, "_by_pred", None)

    def __eq__(self, other):
        return isinstance(other, LogicalState) and self.facts == other.facts

    def __hash__(self):
        return self._hash

    def __contains__(self, fact: Fact):
        return fact in self.facts

    def __len__(self):
        return len(self.facts)

    def __iter__(self):
        return iter(self.sorted_facts())

    def sorted_facts(self) -> list[Fact]:
        """Facts in a canonical order, for deterministic iteration."""
        if self._sorted is None:
            object.__setattr__(self, "_sorted", sorted(self.facts, key=Fact.sort_key))
        return self._sorted

    def with_pred(self, predicate: str) -> list[Fact]:
        if self._by_pred is None:
            by_pred = {}
            for f in self.sorted_facts():
                by_pred.setdefault(f.predicate, []).append(f)
            object.__setattr__(self, "_by_pred", by_pred)
        return self._by_pred.get(predicate, [])

    def __repr__(self):
        return "{%s}" % ", ".join(repr(f) for f in self.sorted_facts())


# Fact templates use plain strings for arguments: "?x" is a variable, anything
# else names an object.


@dataclass(frozen=True)
class FactTemplate:
    predicate: str
    args: tuple[str, ...]

    def variables(self) -> set[str]:
        return {a for a in self.args if a.startswith("?")}

    def __repr__(self):
        return "(%s)" % " ".join([self.predicate] + list(self.args))


@dataclass(frozen=True)
class StreamSchema:
    """A conditional generator: given inputs satisfying the domain facts, its
    sampler yields outputs for which the certified facts hold. `fluents` names
    fluent predicates whose current facts are captured as evaluation context
    (and become part of instance identity)."""

    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    domain: tuple[FactTemplate, ...]
    certified: tuple[FactTemplate, ...]
    fluents: tuple[str, ...] = ()


@dataclass(frozen=True)
class ActionSchema:
    """An action schema with its precondition partition precomputed at load
    time: fluent, static facts given in the initial state, and static facts
    only producible by streams."""

    name: str
    params: tuple[str, ...]
    pre_fluent: tuple[FactTemplate, ...]
    pre_static: tuple[FactTemplate, ...]
    pre_certified: tuple[FactTemplate, ...]
    adds: tuple[FactTemplate, ...]
    dels: tuple[FactTemplate, ...]

    @property
    def preconditions(self) -> tuple[FactTemplate, ...]:
        return self.pre_fluent + self.pre_static + self.pre_certified


@dataclass(frozen=True)
class DomainDefinition:
    name: str
    predicates: dict  # name -> arity
    fluent_predicates: frozenset
    certified_predicates: frozenset
    actions: tuple[ActionSchema, ...]
    streams: tuple[StreamSchema, ...]

    def action(self, name: str) -> ActionSchema:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def stream(self, name: str) -> StreamSchema:
        for s in self.streams:
            if s.name == name:
                return s
        raise KeyError(name)

    def is_fluent(self, predicate: str) -> bool:
        return predicate in self.fluent_predicates


@dataclass(frozen=True)
class ProblemInstance:
    name: str
    domain: DomainDefinition
    objects: dict  # id -> ObjectRef
    init: LogicalState
    goal: frozenset  # of Fact


class ActionInstance:
    """A (possibly partially bound) application of an action schema. Arguments
    bound only through stream-certified preconditions stay None until certify()
    fills them in; `streams` is populated by certify() with the stream
    instances that produce those arguments."""

    __slots__ = ("schema", "binding", "streams")

    def __init__(self, schema: ActionSchema, binding: dict, streams=()):
        self.schema = schema
        self.binding = binding
        self.streams = tuple(streams)

    @property
    def args(self) -> tuple:
        return tuple(self.binding.get(p) for p in self.schema.params)

    @property
    def name(self) -> str:
        return self.schema.name

    def sort_key(self):
        return (self.schema.name,) + tuple(a.id if a else "?" for a in self.args)

    def with_binding(self, binding: dict, streams) -> "ActionInstance":
        return ActionInstance(self.schema, binding, streams)

    def ground_template(self, tpl: FactTemplate) -> Fact:
        args = []
        for a in tpl.args:
            if a.startswith("?"):
                obj = self.binding.get(a)
                if obj is None:
                    raise PreconditionError(f"unbound parameter {a} in {self}")
                args.append(obj)
            else:
                args.append(ObjectRef(a))
        return Fact(tpl.predicate, tuple(args))

    def __repr__(self):
        return "(%s)" % " ".join(
            [self.schema.name] + [a.id if a else "?" for a in self.args]
        )


class PreconditionError(Exception):
    """Raised when applying an action whose preconditions do not hold."""


def _match_template(
    tpl: FactTemplate, fact: Fact, binding: dict
) -> Optional[dict]:
    """Unify a template against a ground fact, extending `binding`. Returns the
    extended binding or None."""
    if tpl.predicate != fact.predicate or len(tpl.args) != len(fact.args):
        return None
    out = binding
    for t, obj in zip(tpl.args, fact.args):
        if t.startswith("?"):
            bound = out.get(t)
            if bound is None:
                if out is binding:
                    out = dict(binding)
                out[t] = obj
            elif bound != obj:
                return None
        elif t != obj.id:
            return None
    return out if out is not binding else dict(binding)


def _match_all(
    templates: Sequence[FactTemplate], state: LogicalState, binding: dict
) -> Iterable[dict]:
    """Enumerate bindings satisfying all templates in `state`, depth-first in
    canonical fact order (hence deterministic)."""
    if not templates:
        yield binding
        return
    tpl, rest = templates[0], templates[1:]
    for fact in state.with_pred(tpl.predicate):
        ext = _match_template(tpl, fact, binding)
        if ext is not None:
            yield from _match_all(rest, state, ext)


def fluent_applicable(
    state: LogicalState, domain: DomainDefinition
) -> list[ActionInstance]:
    """All action instances whose fluent and static-given preconditions hold in
    `state`. Stream-certified preconditions are not checked here; the
    parameters they introduce remain unbound. Deterministically ordered by
    schema name, then argument ids."""
    out = []
    for schema in sorted(domain.actions, key=lambda a: a.name):
        seen = set()
        for binding in _match_all(schema.pre_fluent + schema.pre_static, state, {}):
            key = tuple(sorted((v, o.id) for v, o in binding.items()))
            if key in seen:  # same discrete binding via different fact matches
                continue
            seen.add(key)
            out.append(ActionInstance(schema, binding))
    out.sort(key=ActionInstance.sort_key)
    return out


def holds(state: LogicalState, action: ActionInstance) -> bool:
    """True iff the action's fluent and static-given preconditions hold."""
    try:
        needed = [
            action.ground_template(t)
            for t in action.schema.pre_fluent + action.schema.pre_static
        ]
    except PreconditionError:
        return False
    return all(f in state for f in needed)


def apply(state: LogicalState, action: ActionInstance) -> LogicalState:
    """The successor state (state \\ deletes) | adds. The input is unmodified.

    Raises PreconditionError if the action's fluent/static preconditions do
    not hold in `state`."""
    if not holds(state, action):
        raise PreconditionError(f"{action} not applicable")
    dels = {action.ground_template(t) for t in action.schema.dels}
    adds = {action.ground_template(t) for t in action.schema.adds}
    return LogicalState((state.facts - dels) | adds)


def goal_satisfied(state: LogicalState, goal: Iterable[Fact]) -> bool:
    """True iff every goal fact is in `state`."""
    return all(f in state for f in goal)


@dataclass(frozen=True)
class GroundedPlan:
    """A sequence of fully bound action instances."""

    actions: tuple[ActionInstance, ...]

    def __len__(self):
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)
