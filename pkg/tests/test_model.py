"""Transition-model tests: applicability, application, goal check."""

import itertools

import pytest

from lazytamp.domains2d import figure_scene
from lazytamp.model import (
    Fact,
    LogicalState,
    ObjectRef,
    PreconditionError,
    apply,
    fluent_applicable,
    goal_satisfied,
)


def _fact(pred, *names):
    return Fact(pred, tuple(ObjectRef(n) for n in names))


def test_fluent_applicable_blocks(blocks_domain, blocks_problem):
    actions = fluent_applicable(blocks_problem.init, blocks_domain)
    assert [a.sort_key() for a in actions] == [("pick", "b0", "t0")]


def test_fluent_applicable_figure_ignores_geometry():
    # blocking is geometric: logically, every clear block is pickable
    _, problem = figure_scene()
    actions = fluent_applicable(problem.init, problem.domain)
    picked = {a.binding["?b"].id for a in actions if a.name in ("pick", "unstack")}
    # b1 sits on b0 (so b0 is not clear); b1 and b2 are grabbable logically
    assert picked == {"b1", "b2"}


def test_no_pick_while_holding(blocks_domain, blocks_problem):
    [pick] = fluent_applicable(blocks_problem.init, blocks_domain)
    after = apply(blocks_problem.init, pick)
    assert all(a.name != "pick" for a in fluent_applicable(after, blocks_domain))


def test_empty_state(blocks_domain):
    assert fluent_applicable(LogicalState(()), blocks_domain) == []


def test_apply_effects(blocks_domain, blocks_problem):
    [pick] = fluent_applicable(blocks_problem.init, blocks_domain)
    after = apply(blocks_problem.init, pick)
    assert _fact("on", "b0", "t0") not in after
    assert _fact("handEmpty") not in after
    assert _fact("holding", "b0") in after
    # input state untouched
    assert _fact("on", "b0", "t0") in blocks_problem.init


def test_apply_then_inverse_restores(blocks_domain, blocks_problem):
    [pick] = fluent_applicable(blocks_problem.init, blocks_domain)
    after = apply(blocks_problem.init, pick)
    place_back = [
        a
        for a in fluent_applicable(after, blocks_domain)
        if a.sort_key() == ("place", "b0", "t0")
    ][0]
    assert apply(after, place_back) == blocks_problem.init


def test_apply_violated_precondition(blocks_domain, blocks_problem):
    [pick] = fluent_applicable(blocks_problem.init, blocks_domain)
    held = apply(blocks_problem.init, pick)
    with pytest.raises(PreconditionError):
        apply(held, pick)


def test_goal_satisfied():
    s = LogicalState([_fact("on", "b0", "t0")])
    assert goal_satisfied(s, [])
    assert goal_satisfied(s, [_fact("on", "b0", "t0")])
    assert not goal_satisfied(s, [_fact("on", "b0", "t1")])


def test_figure_goal_not_initially_satisfied():
    _, problem = figure_scene()
    assert not goal_satisfied(problem.init, problem.goal)


def test_state_hash_consing():
    a = LogicalState([_fact("on", "b0", "t0"), _fact("handEmpty")])
    b = LogicalState([_fact("handEmpty"), _fact("on", "b0", "t0")])
    assert a == b and hash(a) == hash(b)
    assert len({a, b}) == 1


def test_applicability_exact_characterization(blocks_domain):
    """fluent_applicable(s) is exactly the set of actions apply() accepts,
    checked exhaustively over all small states of the blocks domain."""
    objs = {"b0": ObjectRef("b0"), "t0": ObjectRef("t0")}
    statics = [_fact("isBlock", "b0"), _fact("isTable", "t0")]
    fluents = [
        _fact("on", "b0", "t0"),
        _fact("holding", "b0"),
        _fact("handEmpty"),
    ]
    from lazytamp.model import ActionInstance

    candidates = [
        ActionInstance(schema, {"?b": objs["b0"], "?t": objs["t0"]})
        for schema in blocks_domain.actions
    ]
    for r in range(len(fluents) + 1):
        for subset in itertools.combinations(fluents, r):
            state = LogicalState(list(subset) + statics)
            listed = {a.sort_key() for a in fluent_applicable(state, blocks_domain)}
            for cand in candidates:
                ok = True
                try:
                    apply(state, cand)
                except PreconditionError:
                    ok = False
                assert (cand.sort_key() in listed) == ok


def test_deterministic_ordering(blocks_domain):
    objs = [_fact("isBlock", b) for b in ("b1", "b0")]
    state = LogicalState(
        objs
        + [
            _fact("isTable", "t0"),
            _fact("on", "b0", "t0"),
            _fact("on", "b1", "t0"),
            _fact("handEmpty"),
        ]
    )
    keys = [a.sort_key() for a in fluent_applicable(state, blocks_domain)]
    assert keys == sorted(keys)
    assert keys == [("pick", "b0", "t0"), ("pick", "b1", "t0")]
