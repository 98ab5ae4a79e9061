"""Lazy bi-level task-and-motion planning with pluggable skeleton-search
guidance, evaluated on a built-in 2D tabletop domain."""

from .model import (
    ActionInstance,
    ActionSchema,
    DomainDefinition,
    Fact,
    FactTemplate,
    GroundedPlan,
    LogicalState,
    ObjectRef,
    PreconditionError,
    ProblemInstance,
    StreamSchema,
    apply,
    fluent_applicable,
    goal_satisfied,
    holds,
)
from .pddl import ParseError, parse_domain, parse_plan, parse_problem, serialize_plan
from .streams import CGError, ComputationGraph, IdGen, StreamInstance, certify
from .search import SearchNode, beam_search, best_first_search, f_astar, f_levints, h_add
from .refinement import (
    FeasibilityDB,
    SimClock,
    SolveResult,
    Solver,
    SolverConfig,
    action_cost,
    phi,
    refine,
    renormalize_policy,
    solve,
)
from .domains2d import (
    FAMILIES,
    ProblemSpec,
    SamplerSuite2D,
    Scene2D,
    domain_2d,
    figure_scene,
    generate_problem,
    scene_problem,
)
from .policy import (
    BoltzmannPolicy,
    FeatureSpec,
    LearnedPolicy,
    PolicyModel,
    TrainConfig,
    UniformPolicy,
    bc_train,
    boltzmann_policy,
    collect_demos,
    encode,
    encode_state,
    forward,
    load_model,
    save_model,
    uniform_policy,
)

__version__ = "0.1.0"
