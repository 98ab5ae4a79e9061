"""Just-in-time stream instantiation: deciding whether an action's
stream-certified preconditions are producible, and maintaining the computation
graph of sampling operations per skeleton.

The computation graph (CG) is a directed acyclic hypergraph: roots are initial
objects, hyperedges are stream instances, and non-root nodes are the optimistic
objects those instances produce. CG keys canonicalize an object's producing
sub-graph so feasibility statistics transfer across skeletons.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .model import (
    ActionInstance,
    DomainDefinition,
    Fact,
    FactTemplate,
    LogicalState,
    ObjectRef,
    StreamSchema,
    INITIAL,
    OPTIMISTIC,
)


class CGError(Exception):
    """Internal consistency error in a computation graph."""


@dataclass(frozen=True, eq=False)
class StreamInstance:
    """One application of a stream schema to concrete inputs. `context` holds
    the fluent facts captured at instantiation time for schemas that declare
    :fluents; it is part of the instance's identity and key."""

    schema: StreamSchema
    inputs: tuple[ObjectRef, ...]
    outputs: tuple[ObjectRef, ...]
    certified: tuple[Fact, ...]
    context: tuple[Fact, ...] = ()
    _identity: tuple = None
    _key: str = None

    def identity(self):
        if self._identity is None:
            object.__setattr__(
                self,
                "_identity",
                (
                    self.schema.name,
                    tuple(o.id for o in self.inputs),
                    tuple(f.sort_key() for f in self.context),
                ),
            )
        return self._identity

    def __repr__(self):
        return "%s(%s)->(%s)" % (
            self.schema.name,
            ",".join(o.id for o in self.inputs),
            ",".join(o.id for o in self.outputs),
        )


class ComputationGraph:
    """Immutable CG: stream instances in a valid topological order plus the
    producing-edge map for optimistic objects."""

    __slots__ = ("instances", "producer", "by_identity")

    def __init__(self, instances: Iterable[StreamInstance] = ()):
        instances = tuple(instances)
        producer = {}
        for inst in instances:
            for i, out in enumerate(inst.outputs):
                if out.id in producer:
                    raise CGError(f"object {out.id} produced by two hyperedges")
                producer[out.id] = (inst, i)
        for inst in instances:
            for obj in inst.inputs:
                if obj.kind == OPTIMISTIC and obj.id not in producer:
                    raise CGError(f"input {obj.id} of {inst} has no producer")
        # inputs must come from roots or earlier outputs
        seen = set()
        for inst in instances:
            for obj in inst.inputs + tuple(
                a for f in inst.context for a in f.args
            ):
                if obj.kind == OPTIMISTIC and obj.id not in seen:
                    raise CGError(f"{inst} uses {obj.id} before it is produced")
            for out in inst.outputs:
                seen.add(out.id)
        self.instances = instances
        self.producer = producer
        self.by_identity = {inst.identity(): inst for inst in instances}

    def __len__(self):
        return len(self.instances)

    def __contains__(self, obj):
        if isinstance(obj, ObjectRef):
            return obj.kind == INITIAL or obj.id in self.producer
        return obj in self.instances

    def extend(self, fragment: Iterable[StreamInstance]) -> "ComputationGraph":
        """A new CG with the fragment appended; self is unmodified. Only the
        fragment is validated — this graph is already known consistent."""
        fragment = tuple(fragment)
        if not fragment:
            return self
        new = ComputationGraph.__new__(ComputationGraph)
        producer = dict(self.producer)
        by_identity = dict(self.by_identity)
        for inst in fragment:
            for obj in inst.inputs + tuple(
                a for f in inst.context for a in f.args
            ):
                if obj.kind == OPTIMISTIC and obj.id not in producer:
                    raise CGError(f"{inst} uses {obj.id} before it is produced")
            for i, out in enumerate(inst.outputs):
                if out.id in producer:
                    raise CGError(f"object {out.id} produced by two hyperedges")
                producer[out.id] = (inst, i)
            by_identity[inst.identity()] = inst
        new.instances = self.instances + fragment
        new.producer = producer
        new.by_identity = by_identity
        return new

    # -- canonical keys ------------------------------------------------------

    def key_of(self, obj: ObjectRef) -> str:
        """Canonical key of an object's producing sub-graph. Initial objects
        are kept by identity; optimistic objects are identified purely by the
        structure of their producing chain, so any renaming of the fresh
        variables yields the same key."""
        if obj.kind == INITIAL:
            return "#" + obj.id
        if obj._cgkey is not None:
            return obj._cgkey
        if obj.id not in self.producer:
            raise CGError(f"object {obj.id} not in computation graph")
        inst, slot = self.producer[obj.id]
        key = f"{self.key_of_instance(inst)}:{slot}"
        object.__setattr__(obj, "_cgkey", key)
        return key

    def key_of_instance(self, inst: StreamInstance) -> str:
        """Canonical key of a stream instance (the unit Φ statistics are
        accumulated on). Cached on the instance: an optimistic object has one
        producer for its whole lifetime, so the key is intrinsic to the
        instance and identical in every graph containing it."""
        if inst._key is not None:
            return inst._key
        ins = ",".join(self.key_of(o) for o in inst.inputs)
        ctx = ";".join(sorted(self._fact_key(f) for f in inst.context))
        key = f"{inst.schema.name}[{ins}|{ctx}]"
        object.__setattr__(inst, "_key", key)
        return key

    def _fact_key(self, fact: Fact) -> str:
        return "%s(%s)" % (fact.predicate, ",".join(self.key_of(a) for a in fact.args))

    def to_dot(self) -> str:
        """DOT-format dump of the hypergraph, for debugging."""
        lines = ["digraph cg {", "  rankdir=LR;"]
        roots = {o.id for inst in self.instances for o in inst.inputs if o.kind == INITIAL}
        for r in sorted(roots):
            lines.append(f'  "{r}" [shape=box];')
        for i, inst in enumerate(self.instances):
            hid = f"{inst.schema.name}_{i}"
            lines.append(f'  "{hid}" [shape=ellipse,label="{inst.schema.name}"];')
            for o in inst.inputs:
                lines.append(f'  "{o.id}" -> "{hid}";')
            for o in inst.outputs:
                lines.append(f'  "{hid}" -> "{o.id}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


EMPTY_CG = ComputationGraph()


class IdGen:
    """Deterministic supply of fresh optimistic objects."""

    def __init__(self):
        self.count = 0

    def fresh(self, schema: StreamSchema, out_var: str) -> ObjectRef:
        self.count += 1
        return ObjectRef(
            f"?{out_var.lstrip('?')}{self.count}",
            OPTIMISTIC,
            slot=f"{schema.name}.{out_var.lstrip('?')}",
        )


# --- backward chaining over stream schemas ----------------------------------
#
# Goals are solved left-to-right with a shared binding over action variables
# and renamed stream variables. Each goal is satisfied either by matching an
# existing fact (preferring object reuse) or by scheduling a stream
# instantiation; iterative deepening on the number of new instances yields a
# minimum-cardinality chain.

_MAX_STEPS = 20000


class _Instantiate:
    __slots__ = ("schema", "rename")

    def __init__(self, schema, rename):
        self.schema = schema
        self.rename = rename


def _resolve(term, binding):
    while isinstance(term, str) and term in binding:
        term = binding[term]
    return term


def _unify(a, b, binding):
    a = _resolve(a, binding)
    b = _resolve(b, binding)
    if a == b:
        return binding
    if isinstance(a, str):
        out = dict(binding)
        out[a] = b
        return out
    if isinstance(b, str):
        out = dict(binding)
        out[b] = a
        return out
    return None


def _pattern(tpl: FactTemplate, rename=None):
    """Template args as unification terms: variables stay strings (optionally
    renamed), constants become object references."""
    args = []
    for a in tpl.args:
        if a.startswith("?"):
            args.append(rename[a] if rename else a)
        else:
            args.append(ObjectRef(a))
    return tpl.predicate, tuple(args)


class _Certifier:
    """One bounded backward-chaining attempt. The binding is a single mutable
    dict with trail-based undo (no per-step copies); the search order is
    identical to the naive copy-on-write formulation."""

    def __init__(self, state, cg, cert_index, idgen, limit, ctx_cache=None):
        self.state = state
        self.cg = cg
        self.cert_index = cert_index  # (predicate, arity) -> [(stream, tpl)]
        self.idgen = idgen
        self.limit = limit
        self.steps = 0
        self.binding = {}
        self.trail = []
        self.new_insts = []
        self._ctx_cache = ctx_cache if ctx_cache is not None else {}

    # -- trail-based unification ---------------------------------------------

    def resolve(self, t):
        binding = self.binding
        while isinstance(t, str) and t in binding:
            t = binding[t]
        return t

    def unify(self, a, b):
        a = self.resolve(a)
        b = self.resolve(b)
        if a == b:
            return True
        if isinstance(a, str):
            self.binding[a] = b
            self.trail.append(a)
            return True
        if isinstance(b, str):
            self.binding[b] = a
            self.trail.append(b)
            return True
        return False

    def undo(self, mark):
        binding, trail = self.binding, self.trail
        while len(trail) > mark:
            del binding[trail.pop()]

    # -- search ---------------------------------------------------------------

    def known_facts(self, predicate):
        facts = self.state.with_pred(predicate)
        if not self.new_insts:
            return facts
        facts = list(facts)
        for inst in self.new_insts:
            for f in inst.certified:
                if f.predicate == predicate:
                    facts.append(f)
        return facts

    def solve(self, goals, gi):
        self.steps += 1
        if self.steps > _MAX_STEPS:
            return False
        if gi == len(goals):
            return True
        goal = goals[gi]

        if isinstance(goal, _Instantiate):
            return self.instantiate(goal, goals, gi)

        pred, args = goal
        n = len(args)
        # 1. reuse an existing fact (and with it, existing objects)
        for fact in self.known_facts(pred):
            if len(fact.args) != n:
                continue
            mark = len(self.trail)
            ok = True
            for t, obj in zip(args, fact.args):
                if not self.unify(t, obj):
                    ok = False
                    break
            if ok and self.solve(goals, gi + 1):
                return True
            self.undo(mark)
        # 2. chain a stream whose certified facts cover the goal
        if len(self.new_insts) < self.limit:
            for stream, tpl in self.cert_index.get((pred, n), ()):
                rename = {
                    v: f"?*{stream.name}*{self.steps}*{v.lstrip('?')}"
                    for v in stream.inputs + stream.outputs
                }
                _, targs = _pattern(tpl, rename)
                mark = len(self.trail)
                if all(self.unify(t, u) for t, u in zip(args, targs)):
                    subgoals = [_pattern(d, rename) for d in stream.domain]
                    new_goals = (
                        subgoals
                        + [_Instantiate(stream, rename)]
                        + list(goals[gi + 1 :])
                    )
                    if self.solve(new_goals, 0):
                        return True
                self.undo(mark)
        return False

    def instantiate(self, marker, goals, gi):
        stream, rename = marker.schema, marker.rename
        inputs = []
        for v in stream.inputs:
            t = self.resolve(rename[v])
            if isinstance(t, str):
                return False  # input left unbound by domain facts
            inputs.append(t)
        inputs = tuple(inputs)
        context, ctx_keys = self.capture_context(stream)

        # reuse an identical instance so repeated requests share outputs
        identity = (
            stream.name,
            tuple(o.id for o in inputs),
            ctx_keys,
        )
        existing = self.cg.by_identity.get(identity)
        if existing is None:
            for inst in self.new_insts:
                if inst.identity() == identity:
                    existing = inst
                    break
        mark = len(self.trail)
        if existing is not None:
            if all(
                self.unify(rename[v], out)
                for v, out in zip(stream.outputs, existing.outputs)
            ):
                if self.solve(goals, gi + 1):
                    return True
            self.undo(mark)
            return False

        outputs = []
        for v in stream.outputs:
            t = self.resolve(rename[v])
            if isinstance(t, ObjectRef):
                self.undo(mark)
                return False  # a pre-existing object cannot be re-produced
            fresh = self.idgen.fresh(stream, v)
            self.unify(rename[v], fresh)
            outputs.append(fresh)
        outputs = tuple(outputs)

        certified = []
        for tpl in stream.certified:
            _, targs = _pattern(tpl, rename)
            resolved = tuple(self.resolve(t) for t in targs)
            if any(isinstance(t, str) for t in resolved):
                self.undo(mark)
                return False
            certified.append(Fact(tpl.predicate, resolved))
        inst = StreamInstance(stream, inputs, outputs, tuple(certified), context)
        self.new_insts.append(inst)
        if self.solve(goals, gi + 1):
            return True
        self.new_insts.pop()
        self.undo(mark)
        return False

    def capture_context(self, stream):
        return _capture_context(self.state, stream.fluents, self._ctx_cache)


def _capture_context(state, fluents, cache):
    """A stream's fluent context in `state`, as (facts, sort-key tuple);
    cached per fluent signature."""
    if not fluents:
        return (), ()
    cached = cache.get(fluents)
    if cached is None:
        facts = []
        for pred in fluents:
            facts.extend(state.with_pred(pred))
        facts = tuple(sorted(facts, key=Fact.sort_key))
        cached = (facts, tuple(f.sort_key() for f in facts))
        cache[fluents] = cached
    return cached


def certify(
    action: ActionInstance,
    state: LogicalState,
    cg: ComputationGraph,
    domain: DomainDefinition,
    idgen: Optional[IdGen] = None,
    max_chain: int = 8,
) -> Optional[tuple[ActionInstance, tuple[StreamInstance, ...]]]:
    """Decide whether the action's stream-certified preconditions are
    producible from the state's objects and facts.

    On success returns the action instance with its remaining parameters bound
    (to reused or freshly minted optimistic objects) together with the ordered
    fragment of new stream instances; the fragment is minimal in cardinality.
    Returns None when no stream chain up to `max_chain` instances certifies the
    preconditions.
    """
    idgen = idgen or IdGen()
    goals = [_pattern(t) for t in action.schema.pre_certified]
    cert_index, max_certified = _certified_index(domain)

    # A sound lower bound on the minimum feasible limit, so iterative
    # deepening can skip limits that cannot possibly succeed. A goal with no
    # known fact of its predicate must be chained (limit >= 1). The chain can
    # avoid minting a new instance only by reusing a graph instance with an
    # identical identity — same stream and, for streams with fluent context,
    # the same context as the current state. Each new instance certifies at
    # most `max_certified` facts.
    ctx_cache: dict = {}
    missing = forced = 0
    if goals:
        reusable = {}  # stream name -> context sort-key tuples present in cg
        for name, _ins, ctx in cg.by_identity:
            reusable.setdefault(name, set()).add(ctx)
        for pred, args in goals:
            if any(len(f.args) == len(args) for f in state.with_pred(pred)):
                continue
            missing += 1
            for s, _ in cert_index.get((pred, len(args)), ()):
                ctxs = reusable.get(s.name)
                if ctxs is not None and (
                    _capture_context(state, s.fluents, ctx_cache)[1] in ctxs
                ):
                    break  # reuse conceivable; not forced
            else:
                forced += 1
    start = max(-(-forced // max_certified), 1 if missing else 0)

    for limit in range(start, max_chain + 1):
        cert = _Certifier(state, cg, cert_index, idgen, limit, ctx_cache)
        cert.binding.update(action.binding)
        if cert.solve(goals, 0):
            final, new_insts = cert.binding, cert.new_insts
            full = {}
            for p in action.schema.params:
                t = _resolve(p, final)
                if isinstance(t, ObjectRef):
                    full[p] = t
            if any(p not in full for p in action.schema.params):
                continue  # some parameter never grounded; try a longer chain
            return action.with_binding(full, tuple(new_insts)), tuple(new_insts)
    return None


_INDEX_CACHE: dict[int, tuple] = {}


def _certified_index(domain):
    """((predicate, arity) -> [(stream, certified template)]) with streams in
    name order, plus the largest certified-fact count of any one stream.
    Cached per domain object (the domain is immutable after parsing)."""
    cached = _INDEX_CACHE.get(id(domain))
    if cached is not None and cached[0] is domain:
        return cached[1], cached[2]
    index = {}
    max_certified = 1
    for stream in sorted(domain.streams, key=lambda s: s.name):
        max_certified = max(max_certified, len(stream.certified))
        for tpl in stream.certified:
            index.setdefault((tpl.predicate, len(tpl.args)), []).append(
                (stream, tpl)
            )
    _INDEX_CACHE[id(domain)] = (domain, index, max_certified)
    return index, max_certified
