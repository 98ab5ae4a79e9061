"""Built-in 2D tabletop manipulation domain: tables on a ground line, blocks
with rectangular extents, a point gripper. Geometry lives entirely in the
stream samplers and validators; the planner sees only the declared domain.

Includes seeded generators for the five problem families (stacking, sorting,
random, clutter, distractors) and the three-block scene whose tall blocker
obstructs any grasp of the stacked pair.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import constants as C
from .model import Fact, ProblemInstance
from .pddl import parse_domain, parse_problem

DOMAIN_TEXT = """\
(define (domain tabletop-2d)
  (:predicates
    (isBlock ?b) (isTable ?t)
    (on ?b ?u) (atPose ?b ?p) (clear ?b) (handEmpty) (holding ?b ?g) (atConf ?q)
    (isGraspPose ?b ?g) (isPlacement ?b ?t ?x) (isStackPose ?b ?c ?pc ?x)
    (isReachable ?p ?g ?q) (isMotion ?q1 ?q2 ?tr))

  (:action pick
    :parameters (?b ?t ?p ?g ?q0 ?q ?tr)
    :precondition (and (isBlock ?b) (isTable ?t)
                       (on ?b ?t) (atPose ?b ?p) (clear ?b) (handEmpty) (atConf ?q0)
                       (isGraspPose ?b ?g) (isReachable ?p ?g ?q) (isMotion ?q0 ?q ?tr))
    :effect (and (holding ?b ?g) (atConf ?q)
                 (not (on ?b ?t)) (not (atPose ?b ?p)) (not (clear ?b))
                 (not (handEmpty)) (not (atConf ?q0))))

  (:action unstack
    :parameters (?b ?c ?p ?g ?q0 ?q ?tr)
    :precondition (and (isBlock ?b) (isBlock ?c)
                       (on ?b ?c) (atPose ?b ?p) (clear ?b) (handEmpty) (atConf ?q0)
                       (isGraspPose ?b ?g) (isReachable ?p ?g ?q) (isMotion ?q0 ?q ?tr))
    :effect (and (holding ?b ?g) (clear ?c) (atConf ?q)
                 (not (on ?b ?c)) (not (atPose ?b ?p)) (not (clear ?b))
                 (not (handEmpty)) (not (atConf ?q0))))

  (:action place
    :parameters (?b ?t ?g ?x ?q0 ?q ?tr)
    :precondition (and (isBlock ?b) (isTable ?t) (holding ?b ?g) (atConf ?q0)
                       (isPlacement ?b ?t ?x) (isReachable ?x ?g ?q) (isMotion ?q0 ?q ?tr))
    :effect (and (on ?b ?t) (atPose ?b ?x) (clear ?b) (handEmpty) (atConf ?q)
                 (not (holding ?b ?g)) (not (atConf ?q0))))

  (:action stack
    :parameters (?b ?c ?pc ?g ?x ?q0 ?q ?tr)
    :precondition (and (isBlock ?b) (isBlock ?c) (holding ?b ?g) (clear ?c)
                       (atPose ?c ?pc) (atConf ?q0)
                       (isStackPose ?b ?c ?pc ?x) (isReachable ?x ?g ?q) (isMotion ?q0 ?q ?tr))
    :effect (and (on ?b ?c) (atPose ?b ?x) (clear ?b) (handEmpty) (atConf ?q)
                 (not (holding ?b ?g)) (not (clear ?c)) (not (atConf ?q0))))

  (:stream grasp
    :inputs (?b)
    :domain (and (isBlock ?b))
    :outputs (?g)
    :certified (and (isGraspPose ?b ?g))
    :fluents (atPose on))

  (:stream placement
    :inputs (?b ?t)
    :domain (and (isBlock ?b) (isTable ?t))
    :outputs (?x)
    :certified (and (isPlacement ?b ?t ?x))
    :fluents (atPose on))

  (:stream stackpose
    :inputs (?b ?c ?pc)
    :domain (and (isBlock ?b) (isBlock ?c))
    :outputs (?x)
    :certified (and (isStackPose ?b ?c ?pc ?x)))

  (:stream ik
    :inputs (?p ?g)
    :domain (and)
    :outputs (?q)
    :certified (and (isReachable ?p ?g ?q)))

  (:stream motion
    :inputs (?q1 ?q2)
    :domain (and)
    :outputs (?tr)
    :certified (and (isMotion ?q1 ?q2 ?tr))
    :fluents (atPose on)))
"""

_domain_cache = None


def domain_2d():
    """The parsed tabletop domain (shared, parsed once)."""
    global _domain_cache
    if _domain_cache is None:
        _domain_cache = parse_domain(DOMAIN_TEXT, origin="tabletop-2d")
    return _domain_cache


# --- scene ------------------------------------------------------------------


@dataclass
class Table:
    id: str
    xmin: float
    xmax: float

    @property
    def width(self):
        return self.xmax - self.xmin


@dataclass
class Block:
    id: str
    width: float
    height: float
    x: float
    support: str  # table or block id


@dataclass
class Scene2D:
    tables: list
    blocks: list
    clearance: float = C.REACH_CLEARANCE
    carry_height: float = C.CARRY_HEIGHT

    def table(self, tid):
        for t in self.tables:
            if t.id == tid:
                return t
        raise KeyError(tid)

    def block(self, bid):
        for b in self.blocks:
            if b.id == bid:
                return b
        raise KeyError(bid)

    def to_json(self) -> str:
        return json.dumps(
            {
                "tables": [asdict(t) for t in self.tables],
                "blocks": [asdict(b) for b in self.blocks],
                "clearance": self.clearance,
                "carry_height": self.carry_height,
            },
            indent=2,
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "Scene2D":
        data = json.loads(text)
        return Scene2D(
            tables=[Table(**t) for t in data["tables"]],
            blocks=[Block(**b) for b in data["blocks"]],
            clearance=data.get("clearance", C.REACH_CLEARANCE),
            carry_height=data.get("carry_height", C.CARRY_HEIGHT),
        )


def scene_to_problem_text(scene: Scene2D, goal_facts, name="scene") -> str:
    """Emit the scene through the problem-file surface syntax, so the solver
    never sees geometry except through samplers."""
    lines = [f"(define (problem {name})", "  (:domain tabletop-2d)", "  (:init"]
    init = ["(handEmpty)", "(atConf q_init)"]
    for t in scene.tables:
        init.append(f"(isTable {t.id})")
    covered = {b.support for b in scene.blocks}
    for b in scene.blocks:
        init.append(f"(isBlock {b.id})")
        init.append(f"(on {b.id} {b.support})")
        init.append(f"(atPose {b.id} p_{b.id})")
        if b.id not in covered:
            init.append(f"(clear {b.id})")
    for fact in init:
        lines.append(f"    {fact}")
    lines.append("  )")
    lines.append("  (:goal (and")
    for g in goal_facts:
        lines.append(f"    {g}")
    lines.append("  ))")
    lines.append("  (:values")
    for t in scene.tables:
        lines.append(f"    ({t.id} %.6f %.6f)" % (t.xmin, t.xmax))
    for b in scene.blocks:
        lines.append(f"    ({b.id} %.6f %.6f)" % (b.width, b.height))
        lines.append(f"    (p_{b.id} %.6f)" % b.x)
    lines.append("    (q_init 0.000000)")
    lines.append("  ))")
    return "\n".join(lines) + "\n"


def scene_problem(scene: Scene2D, goal_facts, name="scene") -> ProblemInstance:
    return parse_problem(scene_to_problem_text(scene, goal_facts, name), domain_2d())


# --- samplers and validators ------------------------------------------------


@dataclass
class GeometryConfig:
    clearance: float = C.REACH_CLEARANCE
    grasp_fraction: float = C.GRASP_FRACTION
    placement_margin: float = C.PLACEMENT_MARGIN
    separation: float = C.SEPARATION
    placement_tries: int = C.PLACEMENT_TRIES
    reach: tuple = (C.REACH_MIN, C.REACH_MAX)
    carry_height: float = C.CARRY_HEIGHT
    eps: float = 1e-9


class _ContextScene:
    """Poses, sizes and support relations reconstructed from a stream
    instance's captured fluent facts and their bound values."""

    def __init__(self, context):
        self.pose = {}
        self.size = {}
        self.support = {}
        for fact, values in context:
            if fact.predicate == "atPose":
                b, p = fact.args
                self.size[b.id] = values[0]
                if values[1] is not None:
                    self.pose[b.id] = values[1][0]
            elif fact.predicate == "on":
                b, u = fact.args
                self.size[b.id] = values[0]
                self.support[b.id] = u.id

    def is_block(self, oid):
        return oid in self.pose

    def top(self, oid) -> float:
        base = 0.0
        cur = oid
        seen = set()
        while True:
            sup = self.support.get(cur)
            if sup is None or sup not in self.pose or sup in seen:
                break
            seen.add(sup)
            base += self.size[sup][1]
            cur = sup
        return base + self.size[oid][1]

    def placed_ids(self):
        return sorted(self.pose)

    def on_table(self, tid):
        """Ids of objects supported (transitively) by the table."""
        out = []
        for oid in self.placed_ids():
            cur = oid
            seen = set()
            while cur in self.support and cur not in seen:
                seen.add(cur)
                cur = self.support[cur]
            if cur == tid:
                out.append(oid)
        return out


class SamplerSuite2D:
    """Black-box samplers for the tabletop streams, plus validators that
    recompute each certified geometric predicate from bound values."""

    def __init__(self, config: Optional[GeometryConfig] = None):
        self.config = config or GeometryConfig()

    # -- sampling ------------------------------------------------------------

    def sample(self, inst, inputs, context, rng):
        name = inst.schema.name
        scene = _ContextScene(context)
        if name == "grasp":
            return self._sample_grasp(inputs, scene, rng)
        if name == "placement":
            return self._sample_placement(inputs, scene, rng)
        if name == "stackpose":
            (_, _), (_, _), (_, pc) = inputs
            return ((pc[0],),)
        if name == "ik":
            (_, p), (_, g) = inputs
            q = p[0] + g[0]
            lo, hi = self.config.reach
            if not (lo <= q <= hi):
                return None
            return ((q,),)
        if name == "motion":
            (_, q1), (_, q2) = inputs
            if self._motion_blocked(q1[0], q2[0], scene):
                return None
            return ((q1[0], q2[0]),)
        raise KeyError(f"unknown stream {name}")

    def _sample_grasp(self, inputs, scene, rng):
        (b, size) = inputs[0]
        if self._grasp_blocked(b.id, size, scene):
            return None
        half = size[0] / 2.0 * self.config.grasp_fraction
        return ((float(rng.uniform(-half, half)),),)

    def _grasp_blocked(self, bid, size, scene):
        if bid not in scene.pose:
            return False  # no captured pose: nothing is adjacent
        x = scene.pose[bid]
        top = scene.top(bid)
        for oid in scene.placed_ids():
            if oid == bid:
                continue
            gap = abs(scene.pose[oid] - x) - (scene.size[oid][0] + size[0]) / 2.0
            if gap < self.config.clearance and scene.top(oid) > top + self.config.eps:
                return True
        return False

    def _sample_placement(self, inputs, scene, rng):
        (b, size), (t, extent) = inputs
        width = size[0]
        lo = extent[0] + width / 2.0 + self.config.placement_margin
        hi = extent[1] - width / 2.0 - self.config.placement_margin
        if hi <= lo:
            return None
        occupied = [
            (scene.pose[oid], scene.size[oid][0]) for oid in scene.on_table(t.id)
        ]
        for _ in range(self.config.placement_tries):
            x = float(rng.uniform(lo, hi))
            if all(
                abs(x - ox) >= (width + ow) / 2.0 + self.config.separation
                for ox, ow in occupied
            ):
                return ((x,),)
        return None

    def _motion_blocked(self, q1, q2, scene):
        lo, hi = min(q1, q2), max(q1, q2)
        for oid in scene.placed_ids():
            if scene.top(oid) > self.config.carry_height and lo < scene.pose[oid] < hi:
                return True
        return False

    # -- validation ----------------------------------------------------------

    def validate(self, fact: Fact, values, context) -> bool:
        scene = _ContextScene(context)
        pred = fact.predicate
        eps = 1e-6
        if pred == "isGraspPose":
            size, g = values
            if g is None or abs(g[0]) > size[0] / 2.0 + eps:
                return False
            return not self._grasp_blocked(fact.args[0].id, size, scene)
        if pred == "isPlacement":
            size, extent, x = values
            width = size[0]
            if not (
                extent[0] + width / 2.0 - eps <= x[0] <= extent[1] - width / 2.0 + eps
            ):
                return False
            for oid in scene.on_table(fact.args[1].id):
                if abs(x[0] - scene.pose[oid]) < (width + scene.size[oid][0]) / 2.0 - eps:
                    return False
            return True
        if pred == "isStackPose":
            _, _, pc, x = values
            return abs(x[0] - pc[0]) <= eps
        if pred == "isReachable":
            p, g, q = values
            lo, hi = self.config.reach
            return abs(q[0] - (p[0] + g[0])) <= eps and lo - eps <= q[0] <= hi + eps
        if pred == "isMotion":
            q1, q2, tr = values
            if abs(tr[0] - q1[0]) > eps or abs(tr[1] - q2[0]) > eps:
                return False
            return not self._motion_blocked(q1[0], q2[0], scene)
        raise KeyError(f"unknown certified predicate {pred}")


# --- problem generation -----------------------------------------------------

FAMILIES = ("stacking", "sorting", "random", "clutter", "distractors")


@dataclass
class ProblemSpec:
    family: str
    n_blocks: int = 3
    n_blockers: int = 1
    seed: int = 0
    poisson_radius: float = C.POISSON_RADIUS


class InfeasibleSpec(Exception):
    """The requested objects cannot be placed on the tables."""


def _table_width(n_objects):
    return max(C.MIN_TABLE_WIDTH, C.TABLE_WIDTH_PER_OBJECT * n_objects)


def _scatter(rng, table, widths, min_gap, adjacency=None):
    """Place objects with the given widths on a table, left to right with
    random gaps; `adjacency` pairs (i, j) force object j next to object i
    (inside grasp clearance). Returns centre positions."""
    positions = {}
    order = list(range(len(widths)))
    cursor = table.xmin + C.PLACEMENT_MARGIN
    adjacency = adjacency or {}
    loose = [i for i in order if i not in adjacency]
    for i in loose:
        cursor += widths[i] / 2.0
        slack = float(rng.uniform(min_gap, min_gap + 1.0))
        positions[i] = cursor
        cursor += widths[i] / 2.0 + slack
        attached = [j for j, anchor in adjacency.items() if anchor == i]
        for j in attached:
            off = (widths[i] + widths[j]) / 2.0 + C.REACH_CLEARANCE * 0.5
            positions[j] = positions[i] + off
            cursor = max(cursor, positions[j] + widths[j] / 2.0 + min_gap)
    if cursor > table.xmax - C.PLACEMENT_MARGIN:
        raise InfeasibleSpec(
            f"objects of total width {cursor - table.xmin:.1f} do not fit on {table.id}"
        )
    return positions


def _poisson_1d(rng, table, widths, radius, tries=200):
    """Ordered Poisson-disc sampling on the table interval: each position is
    drawn uniformly and accepted only if at least `radius` from all previously
    accepted positions."""
    positions = []
    for w in widths:
        lo = table.xmin + w / 2.0 + C.PLACEMENT_MARGIN
        hi = table.xmax - w / 2.0 - C.PLACEMENT_MARGIN
        for _ in range(tries):
            x = float(rng.uniform(lo, hi))
            if all(abs(x - px) >= radius for px in positions):
                positions.append(x)
                break
        else:
            raise InfeasibleSpec("poisson-disc sampling failed to fit all objects")
    return positions


def generate_problem(spec: ProblemSpec):
    """Deterministically generate a (Scene2D, ProblemInstance) pair for the
    requested family. The instance is solvable by construction: goals only
    request placements that fit and every object can be reached once taller
    neighbours are out of the way."""
    if spec.family not in FAMILIES:
        raise ValueError(f"unknown family {spec.family!r}")
    rng = np.random.default_rng(
        np.random.SeedSequence([FAMILIES.index(spec.family), spec.seed])
    )
    build = {
        "stacking": _gen_stacking,
        "sorting": _gen_sorting,
        "random": _gen_random,
        "clutter": _gen_clutter,
        "distractors": _gen_distractors,
    }[spec.family]
    scene, goal = build(spec, rng)
    problem = scene_problem(scene, goal, name=f"{spec.family}-{spec.seed}")
    return scene, problem


def _blocks_and_blockers(spec, rng, n_blockers=None):
    n_blockers = spec.n_blockers if n_blockers is None else n_blockers
    blocks = [
        ("b%d" % i, C.BLOCK_WIDTH, C.BLOCK_HEIGHT) for i in range(spec.n_blocks)
    ]
    blockers = [
        ("k%d" % i, C.BLOCKER_WIDTH, C.BLOCKER_HEIGHT) for i in range(n_blockers)
    ]
    return blocks, blockers


def _two_tables(n_objects):
    w = _table_width(n_objects)
    t0 = Table("t0", 0.0, w)
    t1 = Table("t1", w + C.TABLE_GAP, 2 * w + C.TABLE_GAP)
    return [t0, t1]


def _populate(rng, tables, items, min_gap=C.SEPARATION, block_some=True):
    """Spread items over the tables; with `block_some`, each blocker is placed
    adjacent to a randomly chosen block so grasps start out obstructed."""
    blocks = [it for it in items if it[2] <= C.BLOCK_HEIGHT]
    blockers = [it for it in items if it[2] > C.BLOCK_HEIGHT]
    per_table = {t.id: [] for t in tables}
    for it in blocks:
        tid = tables[int(rng.integers(len(tables)))].id
        per_table[tid].append(it)
    for it in blockers:
        tid = tables[int(rng.integers(len(tables)))].id
        per_table[tid].append(it)

    placed = []
    for t in tables:
        group = per_table[t.id]
        if not group:
            continue
        widths = [it[1] for it in group]
        adjacency = {}
        if block_some:
            idx_blocks = [i for i, it in enumerate(group) if it[2] <= C.BLOCK_HEIGHT]
            idx_blockers = [i for i, it in enumerate(group) if it[2] > C.BLOCK_HEIGHT]
            for j in idx_blockers:
                if idx_blocks and rng.random() < 0.7:
                    adjacency[j] = int(rng.choice(idx_blocks))
        positions = _scatter(rng, t, widths, min_gap, adjacency)
        for i, (bid, w, h) in enumerate(group):
            placed.append(Block(bid, w, h, positions[i], t.id))
    return placed


def _gen_stacking(spec, rng):
    blocks, blockers = _blocks_and_blockers(spec, rng)
    tables = _two_tables(spec.n_blocks + spec.n_blockers)
    placed = _populate(rng, tables, blocks + blockers)
    scene = Scene2D(tables, placed)
    names = [b[0] for b in blocks]
    perm = [names[i] for i in rng.permutation(len(names))]
    goal = []
    i = 0
    while i + 1 < len(perm):
        size = int(rng.integers(2, min(3, len(perm) - i) + 1))
        tower = perm[i : i + size]
        for lower, upper in zip(tower, tower[1:]):
            goal.append(f"(on {upper} {lower})")
        i += size
    if not goal and len(perm) >= 2:
        goal.append(f"(on {perm[1]} {perm[0]})")
    return scene, goal


def _gen_sorting(spec, rng):
    blocks, blockers = _blocks_and_blockers(spec, rng)
    tables = _two_tables(spec.n_blocks + spec.n_blockers)
    placed = _populate(rng, tables, blocks + blockers)
    scene = Scene2D(tables, placed)
    goal = []
    for name, _, _ in blocks:
        color = tables[int(rng.integers(len(tables)))].id
        goal.append(f"(on {name} {color})")
    for b in placed:
        if b.height > C.BLOCK_HEIGHT:  # blockers return to their original table
            goal.append(f"(on {b.id} {b.support})")
    return scene, goal


def _gen_random(spec, rng):
    blocks, blockers = _blocks_and_blockers(spec, rng)
    tables = _two_tables(spec.n_blocks + spec.n_blockers)
    placed = _populate(rng, tables, blocks + blockers)
    scene = Scene2D(tables, placed)
    goal = []
    names = [b[0] for b in blocks]
    perm = [names[i] for i in rng.permutation(len(names))]
    for i, name in enumerate(perm):
        if i > 0 and rng.random() < 0.4:
            goal.append(f"(on {name} {perm[i - 1]})")
        elif rng.random() < 0.8:
            goal.append(f"(on {name} {tables[int(rng.integers(len(tables)))].id})")
    if not goal:
        goal.append(f"(on {perm[0]} {tables[0].id})")
    return scene, goal


def _gen_clutter(spec, rng):
    blocks, blockers = _blocks_and_blockers(spec, rng, n_blockers=2 * spec.n_blockers)
    tables = _two_tables(spec.n_blocks + 2 * spec.n_blockers)
    items = blocks + blockers
    per_table = {t.id: [] for t in tables}
    for it in items:
        per_table[tables[int(rng.integers(len(tables)))].id].append(it)
    placed = []
    for t in tables:
        group = per_table[t.id]
        if not group:
            continue
        xs = _poisson_1d(rng, t, [it[1] for it in group], spec.poisson_radius)
        for (bid, w, h), x in zip(group, xs):
            placed.append(Block(bid, w, h, x, t.id))
    scene = Scene2D(tables, placed)
    goal = []
    names = [b[0] for b in blocks]
    perm = [names[i] for i in rng.permutation(len(names))]
    for i, name in enumerate(perm):
        if i > 0 and rng.random() < 0.3:
            goal.append(f"(on {name} {perm[i - 1]})")
        else:
            goal.append(f"(on {name} {tables[int(rng.integers(len(tables)))].id})")
    return scene, goal


def _gen_distractors(spec, rng):
    blocks, blockers = _blocks_and_blockers(spec, rng)
    n_distract = max(1, spec.n_blocks // 2)
    distractors = [
        ("d%d" % i, C.BLOCK_WIDTH, C.BLOCK_HEIGHT) for i in range(n_distract)
    ]
    tables = _two_tables(spec.n_blocks + spec.n_blockers)
    side_w = _table_width(n_distract)
    side = Table("t2", tables[-1].xmax + C.TABLE_GAP, tables[-1].xmax + C.TABLE_GAP + side_w)
    placed = _populate(rng, tables, blocks + blockers)
    xs = _scatter(rng, side, [d[1] for d in distractors], C.SEPARATION)
    for i, (bid, w, h) in enumerate(distractors):
        placed.append(Block(bid, w, h, xs[i], side.id))
    scene = Scene2D(tables + [side], placed)
    names = [b[0] for b in blocks]
    perm = [names[i] for i in rng.permutation(len(names))]
    goal = []
    for i, name in enumerate(perm):
        if i > 0 and rng.random() < 0.4:
            goal.append(f"(on {name} {perm[i - 1]})")
        else:
            goal.append(f"(on {name} {tables[int(rng.integers(2))].id})")
    return scene, goal


# --- the three-block blocked-grasp scene ------------------------------------


def figure_scene() -> tuple[Scene2D, ProblemInstance]:
    """Two short blocks stacked on the left table with a tall blocker close
    enough to obstruct any grasp of either; the goal moves both short blocks
    to the right table. The shortest geometrically feasible plan has six
    actions (the blocker must move first)."""
    tables = [Table("t0", 0.0, 8.0), Table("t1", 10.0, 18.0)]
    blocks = [
        Block("b0", C.BLOCK_WIDTH, C.BLOCK_HEIGHT, 3.0, "t0"),
        Block("b1", C.BLOCK_WIDTH, C.BLOCK_HEIGHT, 3.0, "b0"),
        Block("b2", C.BLOCKER_WIDTH, C.BLOCKER_HEIGHT, 4.3, "t0"),
    ]
    scene = Scene2D(tables, blocks)
    problem = scene_problem(scene, ["(on b0 t1)", "(on b1 t1)"], name="figure")
    return scene, problem
