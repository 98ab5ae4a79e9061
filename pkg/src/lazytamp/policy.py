"""Guidance policies over applicable actions: uniform, heuristic-Boltzmann,
and a small learned graph-attention scorer trained by behavior cloning.

The learned model is plain numpy with hand-written gradients: an object
encoder of L attention layers over the scene graph, one attention layer that
lets each candidate action attend to every object, and an MLP + softmax head.
All activations are tanh, so the network is smooth everywhere (which also
keeps finite-difference gradient checks well behaved).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .model import (
    ActionInstance,
    DomainDefinition,
    Fact,
    LogicalState,
    ObjectRef,
    ProblemInstance,
    apply,
    fluent_applicable,
    INITIAL,
    OPTIMISTIC,
)
from .search import h_add

MODEL_MAGIC = b"LZPM"
MODEL_VERSION = 1
SELF_EDGE = "<self>"


# --- feature layout ---------------------------------------------------------


@dataclass(frozen=True)
class FeatureSpec:
    """Frozen feature layout for a domain: node/edge/operator vocabularies."""

    predicates: tuple[str, ...]
    unary_static: tuple[str, ...]
    operators: tuple[str, ...]

    @staticmethod
    def for_domain(domain: DomainDefinition) -> "FeatureSpec":
        unary = tuple(
            sorted(
                p
                for p, arity in domain.predicates.items()
                if arity == 1 and not domain.is_fluent(p) and p not in domain.certified_predicates
            )
        )
        return FeatureSpec(
            predicates=tuple(sorted(domain.predicates)),
            unary_static=unary,
            operators=tuple(sorted(a.name for a in domain.actions)),
        )

    @property
    def node_dim(self) -> int:
        # type one-hot | at-initial-pose bit
        return len(self.unary_static) + 1 + 1

    @property
    def edge_dim(self) -> int:
        # predicate one-hot (+ self-loop slot) | two role indices | goal flag
        return len(self.predicates) + 1 + 2 + 1

    @property
    def op_dim(self) -> int:
        return len(self.operators)


@dataclass
class SceneGraph:
    """Encoded state+goal: one node per object, one labeled edge per argument
    pair of every state or goal fact, plus self-loops."""

    node_ids: list
    x: np.ndarray  # (N, node_dim)
    src: np.ndarray  # (E,)
    dst: np.ndarray  # (E,)
    efeat: np.ndarray  # (E, edge_dim)

    def index_of(self, obj_id: str) -> Optional[int]:
        try:
            return self.node_ids.index(obj_id)
        except ValueError:
            return None


@dataclass
class ActionCandidate:
    """A candidate action for the policy head: operator one-hot plus the graph
    nodes its bound parameters refer to."""

    operator: str
    param_nodes: tuple[int, ...]


class EncodingError(Exception):
    pass


def _encodable(fact: Fact, domain: DomainDefinition) -> bool:
    # fluent facts and the static facts given in the initial state; the
    # optimistic certified facts are bookkeeping, not scene structure
    return fact.predicate not in domain.certified_predicates


def _arg0_facts(state: LogicalState, obj_id: str, domain: DomainDefinition):
    return frozenset(
        f
        for f in state.facts
        if domain.is_fluent(f.predicate) and f.args and f.args[0].id == obj_id
    )


def encode_state(
    problem: ProblemInstance,
    state: LogicalState,
    spec: FeatureSpec,
    goal=None,
) -> SceneGraph:
    """Encode a logical state plus the problem goal as a scene graph.

    The encoding is deliberately structural: node features are the static type
    one-hot plus a single at-initial-pose bit (set for an object that is linked
    to a payload-carrying pose object through a binary fluent and whose fluent
    facts still match the initial state — i.e. it has not been moved).
    Continuous values (coordinates, extents) are omitted: they let the network
    memorize training scenes instead of learning transferable structure, and
    geometric feasibility is the refinement loop's job, not the policy's."""
    domain = problem.domain
    goal = problem.goal if goal is None else goal
    facts = [f for f in state.sorted_facts() if _encodable(f, domain)]
    goal_facts = sorted(goal, key=Fact.sort_key)

    ids = sorted({a.id for f in facts + goal_facts for a in f.args})
    index = {oid: i for i, oid in enumerate(ids)}

    n_unary = len(spec.unary_static)
    x = np.zeros((len(ids), spec.node_dim))
    unary_pos = {p: i for i, p in enumerate(spec.unary_static)}
    typed = set()
    for f in facts:
        if f.predicate in unary_pos and len(f.args) == 1:
            x[index[f.args[0].id], unary_pos[f.predicate]] = 1.0
            typed.add(f.args[0].id)
    for oid in ids:
        if oid not in typed:
            x[index[oid], n_unary] = 1.0  # "other"

    # pose link: the lexicographically first binary fluent fact (o, p) where p
    # carries a payload
    pose_link = {}
    for f in facts:
        if (
            domain.is_fluent(f.predicate)
            and len(f.args) == 2
            and f.args[1].payload is not None
        ):
            pose_link.setdefault(f.args[0].id, f.args[1])

    base = n_unary + 1
    for oid in ids:
        moved = _arg0_facts(state, oid, domain) != _arg0_facts(problem.init, oid, domain)
        if oid in pose_link and not moved:
            x[index[oid], base] = 1.0

    pred_pos = {p: i for i, p in enumerate(spec.predicates)}
    self_pos = len(spec.predicates)
    src, dst, feats = [], [], []

    def add_edge(i, j, pred_idx, role_i, role_j, goal_flag):
        e = np.zeros(spec.edge_dim)
        e[pred_idx] = 1.0
        e[self_pos + 1] = role_i
        e[self_pos + 2] = role_j
        e[self_pos + 3] = goal_flag
        src.append(i)
        dst.append(j)
        feats.append(e)

    for flag, group in ((0.0, facts), (1.0, goal_facts)):
        for f in group:
            p = pred_pos[f.predicate]
            idxs = [index[a.id] for a in f.args]
            if len(idxs) == 1:
                add_edge(idxs[0], idxs[0], p, 0, 0, flag)
            else:
                for i in range(len(idxs)):
                    for j in range(len(idxs)):
                        if i != j:
                            add_edge(idxs[i], idxs[j], p, i, j, flag)
    for i in range(len(ids)):
        add_edge(i, i, self_pos, 0, 0, 0.0)

    return SceneGraph(
        node_ids=ids,
        x=x,
        src=np.array(src, dtype=np.intp),
        dst=np.array(dst, dtype=np.intp),
        efeat=np.array(feats),
    )


def encode(
    problem: ProblemInstance,
    prefix: Iterable[ActionInstance],
    spec: FeatureSpec,
) -> SceneGraph:
    """Encode the state reached by applying `prefix` from the initial state."""
    state = problem.init
    try:
        for action in prefix:
            state = apply(state, action)
    except Exception as exc:
        raise EncodingError(f"invalid skeleton prefix: {exc}") from exc
    return encode_state(problem, state, spec)


def candidate_for(action: ActionInstance, graph: SceneGraph, spec: FeatureSpec) -> ActionCandidate:
    nodes = []
    for p in action.schema.params:
        obj = action.binding.get(p)
        if obj is None:
            continue
        idx = graph.index_of(obj.id)
        if idx is not None:
            nodes.append(idx)
    return ActionCandidate(action.schema.name, tuple(nodes))


# --- model ------------------------------------------------------------------


@dataclass
class PolicyModel:
    spec: FeatureSpec
    layers: int
    width: int
    params: dict  # name -> np.ndarray, in fixed slice order

    def slice_names(self):
        return list(self.params)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self.params])

    def set_flat(self, vec: np.ndarray):
        i = 0
        for k in self.params:
            n = self.params[k].size
            self.params[k] = vec[i : i + n].reshape(self.params[k].shape)
            i += n
        assert i == vec.size


def init_model(spec: FeatureSpec, layers: int = 2, width: int = 32, seed: int = 0) -> PolicyModel:
    """Seeded initialization; parameter layout is fixed by insertion order."""
    rng = np.random.default_rng(np.random.SeedSequence([0x4C5A504D, seed]))
    params = {}

    def mk(name, *shape):
        # unit-scale init: with tanh activations this keeps gradients large
        # enough for the plain fixed-step optimizer to converge quickly
        params[name] = rng.normal(0.0, 1.0, size=shape)

    f_in = spec.node_dim
    for l in range(layers):
        mk(f"gat{l}.Wn", width, f_in)
        mk(f"gat{l}.We", width, spec.edge_dim)
        mk(f"gat{l}.b", width)
        mk(f"gat{l}.as", width)
        mk(f"gat{l}.ad", width)
        mk(f"gat{l}.ae", width)
        mk(f"gat{l}.a0", 1)
        f_in = width
    mk("act.Wq", width, spec.op_dim + width)
    mk("act.bq", width)
    mk("act.Wa", width, width)
    mk("act.Ua", width, width)
    mk("act.ba", width)
    mk("act.va", width)
    mk("mlp.W1", width, 2 * width)
    mk("mlp.b1", width)
    mk("mlp.w2", width)
    mk("mlp.b2", 1)
    return PolicyModel(spec, layers, width, params)


def _segment_softmax(scores, seg, n_seg):
    m = np.full(n_seg, -np.inf)
    np.maximum.at(m, seg, scores)
    ex = np.exp(scores - m[seg])
    denom = np.zeros(n_seg)
    np.add.at(denom, seg, ex)
    return ex / denom[seg]


def _forward_graph(model: PolicyModel, graph: SceneGraph):
    """Object-encoder forward pass; returns final embeddings and caches."""
    p = model.params
    x = graph.x
    caches = []
    for l in range(model.layers):
        Wn, We = p[f"gat{l}.Wn"], p[f"gat{l}.We"]
        a_s, a_d, a_e = p[f"gat{l}.as"], p[f"gat{l}.ad"], p[f"gat{l}.ae"]
        a0, b = p[f"gat{l}.a0"], p[f"gat{l}.b"]
        z = x @ Wn.T  # (N, H)
        r = graph.efeat @ We.T  # (E, H)
        msg = z[graph.src] + r
        t = msg_scores = (
            z[graph.src] @ a_s + z[graph.dst] @ a_d + r @ a_e + a0[0]
        )
        s = np.tanh(t)
        alpha = _segment_softmax(s, graph.dst, x.shape[0])
        agg = np.zeros((x.shape[0], model.width))
        np.add.at(agg, graph.dst, alpha[:, None] * msg)
        out = np.tanh(agg + b)
        caches.append((x, z, r, msg, s, alpha, agg, out))
        x = out
    return x, caches


def _backward_graph(model: PolicyModel, graph: SceneGraph, caches, d_out, grads):
    p = model.params
    for l in reversed(range(model.layers)):
        x, z, r, msg, s, alpha, agg, out = caches[l]
        Wn, We = p[f"gat{l}.Wn"], p[f"gat{l}.We"]
        a_s, a_d, a_e = p[f"gat{l}.as"], p[f"gat{l}.ad"], p[f"gat{l}.ae"]
        d_agg = d_out * (1.0 - out**2)
        grads[f"gat{l}.b"] += d_agg.sum(axis=0)
        d_alpha = np.einsum("eh,eh->e", msg, d_agg[graph.dst])
        d_msg = alpha[:, None] * d_agg[graph.dst]
        # segment-softmax backward
        inner = np.zeros(x.shape[0])
        np.add.at(inner, graph.dst, alpha * d_alpha)
        d_s = alpha * (d_alpha - inner[graph.dst])
        d_t = d_s * (1.0 - s**2)
        grads[f"gat{l}.as"] += d_t @ z[graph.src]
        grads[f"gat{l}.ad"] += d_t @ z[graph.dst]
        grads[f"gat{l}.ae"] += d_t @ r
        grads[f"gat{l}.a0"] += np.array([d_t.sum()])
        d_z = np.zeros_like(z)
        np.add.at(d_z, graph.src, d_t[:, None] * a_s[None, :] + d_msg)
        np.add.at(d_z, graph.dst, d_t[:, None] * a_d[None, :])
        d_r = d_t[:, None] * a_e[None, :] + d_msg
        grads[f"gat{l}.Wn"] += d_z.T @ x
        grads[f"gat{l}.We"] += d_r.T @ graph.efeat
        d_out = d_z @ Wn
    return d_out


def _forward_actions(model: PolicyModel, h: np.ndarray, candidates):
    """Action attention + MLP head; returns logits and caches."""
    p = model.params
    spec = model.spec
    op_pos = {o: i for i, o in enumerate(spec.operators)}
    logits = np.zeros(len(candidates))
    caches = []
    for ci, cand in enumerate(candidates):
        opv = np.zeros(spec.op_dim)
        opv[op_pos[cand.operator]] = 1.0
        if cand.param_nodes:
            pvec = h[list(cand.param_nodes)].mean(axis=0)
        else:
            pvec = np.zeros(model.width)
        u = np.concatenate([opv, pvec])
        q_pre = p["act.Wq"] @ u + p["act.bq"]
        q = np.tanh(q_pre)
        att_pre = q @ p["act.Wa"].T + h @ p["act.Ua"].T + p["act.ba"]  # (N, H)
        att = np.tanh(att_pre)
        scores = att @ p["act.va"]  # (N,)
        beta = np.exp(scores - scores.max())
        beta = beta / beta.sum()
        ctx = beta @ h
        m_in = np.concatenate([q, ctx])
        m_pre = p["mlp.W1"] @ m_in + p["mlp.b1"]
        m = np.tanh(m_pre)
        logits[ci] = p["mlp.w2"] @ m + p["mlp.b2"][0]
        caches.append((opv, pvec, u, q, att, scores, beta, ctx, m_in, m))
    return logits, caches


def _backward_actions(model: PolicyModel, h, candidates, caches, d_logits, grads):
    p = model.params
    d_h = np.zeros_like(h)
    for ci, cand in enumerate(candidates):
        dl = d_logits[ci]
        if dl == 0.0:
            continue
        opv, pvec, u, q, att, scores, beta, ctx, m_in, m = caches[ci]
        grads["mlp.w2"] += dl * m
        grads["mlp.b2"] += np.array([dl])
        d_m = dl * p["mlp.w2"]
        d_m_pre = d_m * (1.0 - m**2)
        grads["mlp.W1"] += np.outer(d_m_pre, m_in)
        grads["mlp.b1"] += d_m_pre
        d_m_in = p["mlp.W1"].T @ d_m_pre
        d_q = d_m_in[: model.width].copy()
        d_ctx = d_m_in[model.width :]
        # ctx = beta @ h
        d_beta = h @ d_ctx
        d_h += np.outer(beta, d_ctx)
        # softmax over nodes
        d_scores = beta * (d_beta - float(beta @ d_beta))
        # scores = att @ va
        grads["act.va"] += att.T @ d_scores
        d_att = np.outer(d_scores, p["act.va"])
        d_att_pre = d_att * (1.0 - att**2)
        grads["act.ba"] += d_att_pre.sum(axis=0)
        grads["act.Wa"] += np.outer(d_att_pre.sum(axis=0), q)
        d_q += d_att_pre.sum(axis=0) @ p["act.Wa"]
        grads["act.Ua"] += d_att_pre.T @ h
        d_h += d_att_pre @ p["act.Ua"]
        d_q_pre = d_q * (1.0 - q**2)
        grads["act.Wq"] += np.outer(d_q_pre, u)
        grads["act.bq"] += d_q_pre
        d_u = p["act.Wq"].T @ d_q_pre
        d_pvec = d_u[model.spec.op_dim :]
        if cand.param_nodes:
            share = d_pvec / len(cand.param_nodes)
            for idx in cand.param_nodes:
                d_h[idx] += share
    return d_h


def forward(model: PolicyModel, graph: SceneGraph, candidates) -> np.ndarray:
    """Probability distribution over the candidate actions. Deterministic, and
    invariant to the order candidates are listed in."""
    if not candidates:
        raise ValueError("forward requires at least one candidate action")
    h, _ = _forward_graph(model, graph)
    logits, _ = _forward_actions(model, h, candidates)
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def loss_and_grad(model: PolicyModel, graph: SceneGraph, candidates, target: int):
    """Cross-entropy loss for one sample and its gradient (dict of slices)."""
    h, g_caches = _forward_graph(model, graph)
    logits, a_caches = _forward_actions(model, h, candidates)
    shifted = np.exp(logits - logits.max())
    probs = shifted / shifted.sum()
    loss = -math.log(max(probs[target], 1e-300))
    d_logits = probs.copy()
    d_logits[target] -= 1.0
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    d_h = _backward_actions(model, h, candidates, a_caches, d_logits, grads)
    _backward_graph(model, graph, g_caches, d_h, grads)
    return loss, grads


# --- behavior cloning -------------------------------------------------------


@dataclass
class TrainConfig:
    layers: int = 2
    width: int = 32
    learning_rate: float = 1e-2
    epochs: int = 200
    seed: int = 0


@dataclass
class Demonstration:
    """One goal/state/action tuple, carried as the problem plus the skeleton
    prefix that reaches the state."""

    problem: ProblemInstance
    prefix: list  # of ActionInstance
    action_name: str
    action_args: tuple[str, ...]  # bound discrete argument ids

    def to_json(self, problem_text: str) -> str:
        def obj_json(o: ObjectRef):
            return {"id": o.id, "kind": o.kind, "slot": o.slot, "payload": o.payload}

        return json.dumps(
            {
                "problem": problem_text,
                "prefix": [
                    {
                        "name": a.schema.name,
                        "binding": {v: obj_json(o) for v, o in a.binding.items()},
                    }
                    for a in self.prefix
                ],
                "action": {"name": self.action_name, "args": list(self.action_args)},
            }
        )


def demonstration_from_json(line: str, domain: DomainDefinition, problem_cache: dict) -> Demonstration:
    from .pddl import parse_problem

    data = json.loads(line)
    text = data["problem"]
    if text not in problem_cache:
        problem_cache[text] = parse_problem(text, domain)
    problem = problem_cache[text]
    prefix = []
    for entry in data["prefix"]:
        schema = domain.action(entry["name"])
        binding = {}
        for var, o in entry["binding"].items():
            payload = tuple(o["payload"]) if o["payload"] is not None else None
            binding[var] = ObjectRef(o["id"], o["kind"], o["slot"], payload)
        prefix.append(ActionInstance(schema, binding))
    return Demonstration(
        problem, prefix, data["action"]["name"], tuple(data["action"]["args"])
    )


def _demo_sample(demo: Demonstration, spec: FeatureSpec):
    """(graph, candidates, target index) for one demonstration."""
    state = demo.problem.init
    for action in demo.prefix:
        state = apply(state, action)
    graph = encode_state(demo.problem, state, spec)
    applicable = fluent_applicable(state, demo.problem.domain)
    candidates = [candidate_for(a, graph, spec) for a in applicable]
    target = None
    for i, a in enumerate(applicable):
        if a.schema.name != demo.action_name:
            continue
        bound = tuple(o.id for o in a.binding.values())
        if all(x in demo.action_args for x in bound):
            target = i
            break
    if target is None:
        raise EncodingError(
            f"demonstrated action {demo.action_name}{demo.action_args} not applicable"
        )
    return graph, candidates, target


def bc_train(demos, config: TrainConfig, spec: FeatureSpec):
    """Behavior cloning: full-batch gradient descent on the mean cross-entropy
    of forward() against the demonstrated actions. Returns the model and the
    per-epoch loss trace. Fully deterministic given the seed."""
    if not demos:
        raise ValueError("bc_train requires at least one demonstration")
    samples = [_demo_sample(d, spec) for d in demos]
    model = init_model(spec, config.layers, config.width, config.seed)
    trace = []
    for _ in range(config.epochs):
        total = 0.0
        grads = {k: np.zeros_like(v) for k, v in model.params.items()}
        for graph, candidates, target in samples:
            loss, g = loss_and_grad(model, graph, candidates, target)
            total += loss
            for k in grads:
                grads[k] += g[k]
        mean_loss = total / len(samples)
        if not math.isfinite(mean_loss):
            raise RuntimeError(f"non-finite training loss: {mean_loss}")
        trace.append(mean_loss)
        lr = config.learning_rate / len(samples)
        for k in model.params:
            model.params[k] = model.params[k] - lr * grads[k]
    return model, trace


def collect_demos(problems, suite_factory, solver_config, log=None):
    """Solve each problem with the A*/h_add configuration and cut the returned
    plans into goal/state/action tuples. Unsolved problems are skipped (and
    recorded in `log`)."""
    from .refinement import Solver

    demos = []
    skipped = []
    for name, problem_text, problem in problems:
        solver = Solver(problem, suite_factory(), solver_config)
        result = solver.solve()
        if result.status != "solved":
            skipped.append({"problem": name, "status": result.status})
            continue
        plan = list(result.plan)
        for j, action in enumerate(plan):
            discrete = tuple(
                o.id for o in action.binding.values() if o.kind == INITIAL
            )
            all_args = tuple(o.id for o in action.binding.values())
            demos.append(
                (
                    Demonstration(problem, plan[:j], action.schema.name, all_args),
                    problem_text,
                )
            )
    if log is not None:
        log.extend(skipped)
    return demos, skipped


# --- model file format ------------------------------------------------------


def save_model(model: PolicyModel, path: str):
    """Little-endian binary: header {magic, version, L, H, predicate count,
    operator count} then the parameter slices as float64 in layout order."""
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(
            struct.pack(
                "<IIIII",
                MODEL_VERSION,
                model.layers,
                model.width,
                len(model.spec.predicates),
                len(model.spec.operators),
            )
        )
        for k in model.params:
            fh.write(np.ascontiguousarray(model.params[k], dtype="<f8").tobytes())


class ModelFormatError(Exception):
    pass


def load_model(path: str, domain: DomainDefinition) -> PolicyModel:
    """Load and validate a model file against the active domain."""
    spec = FeatureSpec.for_domain(domain)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MODEL_MAGIC:
            raise ModelFormatError(f"bad magic {magic!r}")
        version, layers, width, n_pred, n_op = struct.unpack("<IIIII", fh.read(20))
        if version != MODEL_VERSION:
            raise ModelFormatError(f"unsupported version {version}")
        if n_pred != len(spec.predicates) or n_op != len(spec.operators):
            raise ModelFormatError(
                "model was trained for a different domain "
                f"({n_pred} predicates / {n_op} operators)"
            )
        model = init_model(spec, layers, width, seed=0)
        for k in model.params:
            shape = model.params[k].shape
            n = model.params[k].size
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise ModelFormatError("truncated model file")
            model.params[k] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise ModelFormatError("trailing bytes in model file")
    return model


# --- policies usable by the solver ------------------------------------------


def uniform_policy(candidates) -> list:
    """1/n for each of n candidates."""
    n = len(candidates)
    if n == 0:
        raise ValueError("no candidate actions")
    return [1.0 / n] * n


def boltzmann_policy(h_values, temperature: float) -> list:
    """softmax(-h/T) over candidate successor heuristic values."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    finite = [(-h / temperature) if math.isfinite(h) else -math.inf for h in h_values]
    m = max(finite)
    if m == -math.inf:
        return [1.0 / len(h_values)] * len(h_values)
    ex = [math.exp(v - m) for v in finite]
    z = sum(ex)
    return [e / z for e in ex]


class UniformPolicy:
    def __call__(self, node, candidates, goal):
        return uniform_policy(candidates)


class BoltzmannPolicy:
    def __init__(self, domain: DomainDefinition, temperature: float = 1.0):
        self.domain = domain
        self.temperature = temperature

    def __call__(self, node, candidates, goal):
        hs = [h_add(apply(node.state, a), goal, self.domain) for a in candidates]
        return boltzmann_policy(hs, self.temperature)


class LearnedPolicy:
    """Adapter putting a trained model behind the solver's policy interface,
    memoized by (state, candidate set)."""

    def __init__(self, model: PolicyModel, problem: ProblemInstance):
        self.model = model
        self.problem = problem
        self.spec = model.spec
        self._cache = {}

    def __call__(self, node, candidates, goal):
        key = (node.state, tuple(a.sort_key() for a in candidates))
        if key in self._cache:
            return self._cache[key]
        graph = encode_state(self.problem, node.state, self.spec, goal)
        cands = [candidate_for(a, graph, self.spec) for a in candidates]
        probs = list(forward(self.model, graph, cands))
        self._cache[key] = probs
        return probs
