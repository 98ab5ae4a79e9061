"""Parser and plan-serialization tests."""

import pytest

from lazytamp.model import GroundedPlan
from lazytamp.pddl import (
    ParseError,
    PlanStep,
    parse_domain,
    parse_plan,
    parse_problem,
    serialize_plan,
)

from conftest import BLOCKS_DOMAIN, BLOCKS_PROBLEM


def test_minimal_domain_counts():
    dom = parse_domain(
        """
        (define (domain tiny)
          (:predicates (p ?x))
          (:action act
            :parameters (?x)
            :precondition (and (p ?x))
            :effect (and (not (p ?x)))))
        """
    )
    assert len(dom.predicates) == 1
    assert len(dom.actions) == 1
    assert len(dom.streams) == 0


def test_stream_declaration_echo():
    dom = parse_domain(
        """
        (define (domain g)
          (:predicates (isBlock ?b) (isGraspPose ?b ?g))
          (:action noop
            :parameters (?b)
            :precondition (and (isBlock ?b))
            :effect (and))
          (:stream grasp
            :inputs (?b)
            :domain (and (isBlock ?b))
            :outputs (?g)
            :certified (and (isGraspPose ?b ?g))))
        """
    )
    s = dom.stream("grasp")
    assert s.inputs == ("?b",)
    assert s.outputs == ("?g",)
    assert [repr(t) for t in s.domain] == ["(isBlock ?b)"]
    assert [repr(t) for t in s.certified] == ["(isGraspPose ?b ?g)"]


def test_unbalanced_paren_location():
    source = "\n" * 6 + "(define (domain x)"  # open paren on line 7
    with pytest.raises(ParseError) as err:
        parse_domain(source)
    assert err.value.kind == "syntax"
    assert err.value.line == 7


def test_arity_mismatch():
    with pytest.raises(ParseError) as err:
        parse_domain(
            """
            (define (domain x)
              (:predicates (p ?x))
              (:action a :parameters (?x) :precondition (and (p ?x ?x)) :effect (and)))
            """
        )
    assert err.value.kind == "arity-mismatch"


def test_undeclared_predicate_in_action():
    with pytest.raises(ParseError) as err:
        parse_domain(
            """
            (define (domain x)
              (:predicates (p ?x))
              (:action a :parameters (?x) :precondition (and (q ?x)) :effect (and)))
            """
        )
    assert err.value.kind == "unknown-symbol"


def test_duplicate_definitions():
    with pytest.raises(ParseError) as err:
        parse_domain("(define (domain x) (:predicates (p ?x) (p ?x ?y)))")
    assert err.value.kind == "duplicate-definition"
    with pytest.raises(ParseError) as err:
        parse_domain(
            """
            (define (domain x)
              (:predicates (p ?x))
              (:action a :parameters (?x) :precondition (and) :effect (and (p ?x)))
              (:action a :parameters (?x) :precondition (and) :effect (and (p ?x))))
            """
        )
    assert err.value.kind == "duplicate-definition"


def test_fluent_classification(blocks_domain):
    # fluent iff the predicate appears in some action effect
    assert blocks_domain.fluent_predicates == frozenset(
        {"on", "holding", "handEmpty"}
    )
    for pred in blocks_domain.predicates:
        in_effect = any(
            pred in {t.predicate for t in a.adds + a.dels}
            for a in blocks_domain.actions
        )
        assert blocks_domain.is_fluent(pred) == in_effect


def test_precondition_partition(chain_domain):
    act = chain_domain.action("doit")
    assert {t.predicate for t in act.pre_fluent} == {"pending"}
    assert {t.predicate for t in act.pre_static} == {"isObj"}
    assert {t.predicate for t in act.pre_certified} == {"sampA", "sampB"}


def test_problem_objects(blocks_domain):
    prob = parse_problem(BLOCKS_PROBLEM, blocks_domain)
    assert set(prob.objects) == {"b0", "t0", "t1"}
    assert len(prob.init) == 5
    assert len(prob.goal) == 1


def test_goal_undeclared_predicate(blocks_domain):
    with pytest.raises(ParseError) as err:
        parse_problem(
            """
            (define (problem p) (:domain blocks)
              (:init (isBlock b0))
              (:goal (and (nosuch b0))))
            """,
            blocks_domain,
        )
    assert err.value.kind == "unknown-symbol"


def test_empty_goal_is_valid(blocks_domain):
    prob = parse_problem(
        "(define (problem p) (:domain blocks) (:init (isBlock b0)) (:goal (and)))",
        blocks_domain,
    )
    assert prob.goal == frozenset()


def test_problem_payloads(blocks_domain):
    prob = parse_problem(
        """
        (define (problem p) (:domain blocks)
          (:init (isBlock b0) (isTable t0) (on b0 t0) (handEmpty))
          (:goal (and))
          (:values (b0 1.0 2.0)))
        """,
        blocks_domain,
    )
    assert prob.objects["b0"].payload == (1.0, 2.0)
    assert prob.objects["t0"].payload is None


def test_parse_determinism(blocks_domain):
    a = parse_problem(BLOCKS_PROBLEM, blocks_domain)
    b = parse_problem(BLOCKS_PROBLEM, blocks_domain)
    assert a.init == b.init and a.goal == b.goal and set(a.objects) == set(b.objects)


def test_serialize_empty_plan():
    assert serialize_plan(GroundedPlan(())) == ""


def test_serialize_discrete_plan(blocks_domain, blocks_problem):
    from lazytamp.model import fluent_applicable

    pick = [
        a
        for a in fluent_applicable(blocks_problem.init, blocks_domain)
        if a.name == "pick"
    ][0]
    text = serialize_plan(GroundedPlan((pick,)))
    assert text == "(pick b0 t0)\n"


def test_serialize_continuous_value():
    step = PlanStep("pick", ("b0", "t0", ("g", (0.5,))))
    assert serialize_plan([step]) == "(pick b0 t0 g=0.500000)\n"


def test_serialize_unbound_parameter_error(chain_domain, chain_problem):
    from lazytamp.model import ActionInstance

    act = ActionInstance(
        chain_domain.action("doit"), {"?o": chain_problem.objects["o0"]}
    )
    with pytest.raises(ParseError) as err:
        serialize_plan(GroundedPlan((act,)))
    assert err.value.kind == "unbound-parameter"


def test_plan_round_trip():
    steps = [
        PlanStep("pick", ("b0", "t0", ("g", (0.5,)), ("q", (3.5,)))),
        PlanStep("place", ("b0", "t1", ("x", (12.25, 1.0)))),
    ]
    text = serialize_plan(steps)
    again = parse_plan(text)
    assert again == steps
    # a second round trip is byte-identical
    assert serialize_plan(again) == text
