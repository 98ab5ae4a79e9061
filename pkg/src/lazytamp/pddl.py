"""Parser for the planning input language: PDDL-style s-expressions extended
with stream declarations, plus plan serialization.

Domain files declare predicates, actions and streams; problem files give the
initial fact set, the goal, and optional continuous payloads for initial
objects. The full grammar is documented in docs/file-format.md.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .model import (
    ActionInstance,
    ActionSchema,
    DomainDefinition,
    Fact,
    FactTemplate,
    GroundedPlan,
    LogicalState,
    ObjectRef,
    ProblemInstance,
    StreamSchema,
    INITIAL,
    OPTIMISTIC,
)

PLAN_FLOAT_FORMAT = "%.6f"


class ParseError(Exception):
    """A source-located parse or validation error.

    kind is one of: syntax, arity-mismatch, unknown-symbol,
    duplicate-definition, unbound-parameter.
    """

    def __init__(self, message: str, line: int = 0, column: int = 0, kind: str = "syntax"):
        super().__init__(f"{line}:{column}: {kind}: {message}")
        self.message = message
        self.line = line
        self.column = column
        self.kind = kind


@dataclass
class _Token:
    text: str
    line: int
    column: int


class _Symbol(str):
    """A symbol atom carrying its source location."""

    line: int = 0
    column: int = 0


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
        elif c in " \t\r":
            col += 1
            i += 1
        elif c == ";":
            while i < n and source[i] != "\n":
                i += 1
        elif c in "()":
            tokens.append(_Token(c, line, col))
            col += 1
            i += 1
        else:
            start = i
            start_col = col
            while i < n and source[i] not in " \t\r\n();":
                i += 1
                col += 1
            tokens.append(_Token(source[start:i], line, start_col))
    return tokens


def _read_sexprs(source: str, origin: str = "<input>"):
    """Parse the source into a list of nested lists of _Symbol atoms."""
    tokens = _tokenize(source)
    pos = 0

    def read():
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of input", kind="syntax")
        tok = tokens[pos]
        pos += 1
        if tok.text == "(":
            items = []
            while True:
                if pos >= len(tokens):
                    raise ParseError(
                        "unbalanced parenthesis", tok.line, tok.column, "syntax"
                    )
                if tokens[pos].text == ")":
                    pos += 1
                    return items
                items.append(read())
        if tok.text == ")":
            raise ParseError("unexpected ')'", tok.line, tok.column, "syntax")
        sym = _Symbol(tok.text)
        sym.line = tok.line
        sym.column = tok.column
        return sym

    out = []
    while pos < len(tokens):
        out.append(read())
    return out


def _loc(expr):
    if isinstance(expr, _Symbol):
        return expr.line, expr.column
    for item in expr:
        return _loc(item)
    return 0, 0


def _expect_symbol(expr, what: str) -> _Symbol:
    if not isinstance(expr, _Symbol):
        line, col = _loc(expr)
        raise ParseError(f"expected {what}", line, col, "syntax")
    return expr


def _fact_list(expr, predicates: dict, allow_not=False):
    """Parse a precondition/effect body: a single fact or an (and ...) form.
    Returns (positive templates, negative templates)."""
    pos, neg = [], []

    def one(e):
        if not isinstance(e, list) or not e:
            line, col = _loc(e)
            raise ParseError("expected a fact", line, col, "syntax")
        head = _expect_symbol(e[0], "predicate name")
        if head == "not":
            if not allow_not:
                raise ParseError("negation not allowed here", head.line, head.column)
            if len(e) != 2:
                raise ParseError("(not ...) takes one fact", head.line, head.column)
            tpl = _template(e[1], predicates)
            neg.append(tpl)
        else:
            pos.append(_template(e, predicates))

    if isinstance(expr, list) and expr and isinstance(expr[0], _Symbol) and expr[0] == "and":
        for e in expr[1:]:
            one(e)
    else:
        one(expr)
    return tuple(pos), tuple(neg)


def _template(expr, predicates: dict) -> FactTemplate:
    head = _expect_symbol(expr[0], "predicate name")
    if head not in predicates:
        raise ParseError(f"undeclared predicate '{head}'", head.line, head.column, "unknown-symbol")
    args = tuple(str(_expect_symbol(a, "argument")) for a in expr[1:])
    if len(args) != predicates[head]:
        raise ParseError(
            f"predicate '{head}' expects {predicates[head]} arguments, got {len(args)}",
            head.line,
            head.column,
            "arity-mismatch",
        )
    return FactTemplate(str(head), args)


def _sections(body, name_line, name_col):
    """Split `:keyword value` pairs out of a definition body."""
    out = {}
    i = 0
    while i < len(body):
        key = body[i]
        if not isinstance(key, _Symbol) or not key.startswith(":"):
            line, col = _loc(key)
            raise ParseError("expected :keyword", line, col, "syntax")
        if i + 1 >= len(body):
            raise ParseError(f"missing value for {key}", key.line, key.column, "syntax")
        if str(key) in out:
            raise ParseError(f"duplicate section {key}", key.line, key.column, "duplicate-definition")
        out[str(key)] = body[i + 1]
        i += 2
    return out


def parse_domain(source: str, origin: str = "<domain>") -> DomainDefinition:
    """Parse a domain definition.

    Predicates are classified as fluent iff they occur in some action effect;
    static predicates certified by a stream become the stream-certified
    partition of action preconditions.
    """
    exprs = _read_sexprs(source, origin)
    if len(exprs) != 1 or not isinstance(exprs[0], list):
        raise ParseError("expected a single (define (domain ...)) form", kind="syntax")
    form = exprs[0]
    if len(form) < 2 or str(_expect_symbol(form[0], "define")) != "define":
        line, col = _loc(form)
        raise ParseError("expected (define ...)", line, col, "syntax")
    head = form[1]
    if (
        not isinstance(head, list)
        or len(head) != 2
        or str(_expect_symbol(head[0], "domain")) != "domain"
    ):
        line, col = _loc(head)
        raise ParseError("expected (domain NAME)", line, col, "syntax")
    dom_name = str(_expect_symbol(head[1], "domain name"))

    predicates: dict = {}
    raw_actions = []
    raw_streams = []
    for item in form[2:]:
        if not isinstance(item, list) or not item:
            line, col = _loc(item)
            raise ParseError("expected a definition block", line, col, "syntax")
        tag = _expect_symbol(item[0], "block tag")
        if tag == ":predicates":
            for p in item[1:]:
                if not isinstance(p, list) or not p:
                    line, col = _loc(p)
                    raise ParseError("expected (name ?args...)", line, col, "syntax")
                pname = _expect_symbol(p[0], "predicate name")
                if pname in predicates:
                    raise ParseError(
                        f"duplicate predicate '{pname}'", pname.line, pname.column, "duplicate-definition"
                    )
                predicates[str(pname)] = len(p) - 1
        elif tag == ":action":
            raw_actions.append(item)
        elif tag == ":stream":
            raw_streams.append(item)
        else:
            raise ParseError(f"unknown block {tag}", tag.line, tag.column, "syntax")

    streams = []
    seen_streams = set()
    for item in raw_streams:
        sname = _expect_symbol(item[1], "stream name")
        if sname in seen_streams:
            raise ParseError(f"duplicate stream '{sname}'", sname.line, sname.column, "duplicate-definition")
        seen_streams.add(str(sname))
        sec = _sections(item[2:], sname.line, sname.column)
        inputs = tuple(str(_expect_symbol(v, "variable")) for v in sec.get(":inputs", []))
        outputs = tuple(str(_expect_symbol(v, "variable")) for v in sec.get(":outputs", []))
        dom_facts, _ = _fact_list(sec.get(":domain", [_Symbol("and")]), predicates)
        cert_facts, _ = _fact_list(sec.get(":certified", [_Symbol("and")]), predicates)
        fluents = tuple(str(_expect_symbol(v, "predicate name")) for v in sec.get(":fluents", []))
        for fl in fluents:
            if fl not in predicates:
                raise ParseError(f"undeclared predicate '{fl}'", sname.line, sname.column, "unknown-symbol")
        streams.append(
            StreamSchema(str(sname), inputs, outputs, dom_facts, cert_facts, fluents)
        )

    # Fluent classification: a predicate is fluent iff some action effect
    # mentions it.
    fluent = set()
    parsed_actions = []
    seen_actions = set()
    for item in raw_actions:
        aname = _expect_symbol(item[1], "action name")
        if aname in seen_actions:
            raise ParseError(f"duplicate action '{aname}'", aname.line, aname.column, "duplicate-definition")
        seen_actions.add(str(aname))
        sec = _sections(item[2:], aname.line, aname.column)
        params = tuple(str(_expect_symbol(v, "parameter")) for v in sec.get(":parameters", []))
        pre, _ = _fact_list(sec.get(":precondition", [_Symbol("and")]), predicates)
        adds, dels = _fact_list(sec.get(":effect", [_Symbol("and")]), predicates, allow_not=True)
        for tpl in adds + dels:
            for v in tpl.variables():
                if v not in params:
                    raise ParseError(
                        f"effect variable {v} not a parameter of '{aname}'",
                        aname.line,
                        aname.column,
                        "unknown-symbol",
                    )
            fluent.add(tpl.predicate)
        parsed_actions.append((str(aname), params, pre, adds, dels))

    certified_preds = {t.predicate for s in streams for t in s.certified}
    bad = certified_preds & fluent
    if bad:
        raise ParseError(f"streams may only certify static predicates: {sorted(bad)}")
    for s in streams:
        for fl in s.fluents:
            if fl not in fluent:
                raise ParseError(f"stream '{s.name}' captures non-fluent predicate '{fl}'")

    actions = []
    for aname, params, pre, adds, dels in parsed_actions:
        pre_fluent = tuple(t for t in pre if t.predicate in fluent)
        pre_cert = tuple(
            t for t in pre if t.predicate not in fluent and t.predicate in certified_preds
        )
        pre_static = tuple(
            t
            for t in pre
            if t.predicate not in fluent and t.predicate not in certified_preds
        )
        actions.append(
            ActionSchema(aname, params, pre_fluent, pre_static, pre_cert, adds, dels)
        )

    return DomainDefinition(
        name=dom_name,
        predicates=predicates,
        fluent_predicates=frozenset(fluent),
        certified_predicates=frozenset(certified_preds),
        actions=tuple(actions),
        streams=tuple(streams),
    )


def parse_problem(
    source: str, domain: DomainDefinition, origin: str = "<problem>"
) -> ProblemInstance:
    """Parse a problem instance against a parsed domain.

    Objects are declared implicitly by their appearance in the initial state
    and goal; the optional (:values (obj v...)...) block attaches continuous
    payloads to initial objects.
    """
    exprs = _read_sexprs(source, origin)
    if len(exprs) != 1 or not isinstance(exprs[0], list):
        raise ParseError("expected a single (define (problem ...)) form", kind="syntax")
    form = exprs[0]
    head = form[1] if len(form) > 1 else []
    if (
        not isinstance(head, list)
        or len(head) != 2
        or str(_expect_symbol(head[0], "problem")) != "problem"
    ):
        line, col = _loc(form)
        raise ParseError("expected (problem NAME)", line, col, "syntax")
    prob_name = str(_expect_symbol(head[1], "problem name"))

    init_raw, goal_raw, values_raw = [], [], []
    for item in form[2:]:
        if not isinstance(item, list) or not item:
            line, col = _loc(item)
            raise ParseError("expected a problem block", line, col, "syntax")
        tag = _expect_symbol(item[0], "block tag")
        if tag == ":domain":
            if len(item) != 2 or str(_expect_symbol(item[1], "name")) != domain.name:
                raise ParseError(
                    f"problem requires domain '{item[1] if len(item) > 1 else '?'}'",
                    tag.line,
                    tag.column,
                    "unknown-symbol",
                )
        elif tag == ":init":
            init_raw.extend(item[1:])
        elif tag == ":goal":
            if len(item) != 2:
                raise ParseError("(:goal ...) takes one form", tag.line, tag.column)
            goal_raw.append(item[1])
        elif tag == ":values":
            values_raw.extend(item[1:])
        else:
            raise ParseError(f"unknown block {tag}", tag.line, tag.column, "syntax")

    payloads = {}
    for v in values_raw:
        if not isinstance(v, list) or len(v) < 2:
            line, col = _loc(v)
            raise ParseError("expected (obj value...)", line, col, "syntax")
        oname = _expect_symbol(v[0], "object name")
        try:
            vals = tuple(float(str(x)) for x in v[1:])
        except ValueError:
            raise ParseError(f"non-numeric value for '{oname}'", oname.line, oname.column)
        if str(oname) in payloads:
            raise ParseError(f"duplicate values for '{oname}'", oname.line, oname.column, "duplicate-definition")
        payloads[str(oname)] = vals

    objects: dict = {}

    def obj(name: str) -> ObjectRef:
        if name not in objects:
            objects[name] = ObjectRef(name, INITIAL, payload=payloads.get(name))
        return objects[name]

    def ground(expr) -> Fact:
        tpl = _template(expr, domain.predicates)
        for a in tpl.args:
            if a.startswith("?"):
                line, col = _loc(expr)
                raise ParseError("variables not allowed in problem facts", line, col)
        return Fact(tpl.predicate, tuple(obj(a) for a in tpl.args))

    init_facts = [ground(e) for e in init_raw]
    goal_facts = []
    for g in goal_raw:
        pos, _ = _fact_list(g, domain.predicates)
        for tpl in pos:
            for a in tpl.args:
                if a.startswith("?"):
                    raise ParseError("variables not allowed in goal facts")
            goal_facts.append(Fact(tpl.predicate, tuple(obj(a) for a in tpl.args)))
    for name in payloads:
        obj(name)

    return ProblemInstance(
        name=prob_name,
        domain=domain,
        objects=objects,
        init=LogicalState(init_facts),
        goal=frozenset(goal_facts),
    )


# --- Plan serialization -----------------------------------------------------


@dataclass(frozen=True)
class PlanStep:
    """One serialized plan line: an action name plus argument tokens. Each
    argument is either a plain object name or a (param, values) pair for a
    bound continuous parameter."""

    name: str
    args: tuple  # of str | (str, tuple[float, ...])


def serialize_plan(plan) -> str:
    """Render a plan, one action per line: `(name arg1 arg2 ...)`.

    Bound continuous parameters render as `param=v1,v2` with six decimal
    places. Raises ParseError(kind="unbound-parameter") if any continuous
    parameter is missing its value.
    """
    lines = []
    steps = plan.actions if isinstance(plan, GroundedPlan) else plan
    for step in steps:
        if isinstance(step, PlanStep):
            toks = [step.name]
            for a in step.args:
                if isinstance(a, str):
                    toks.append(a)
                else:
                    pname, vals = a
                    toks.append(
                        "%s=%s" % (pname, ",".join(PLAN_FLOAT_FORMAT % v for v in vals))
                    )
        else:
            toks = [step.schema.name]
            for pname, arg in zip(step.schema.params, step.args):
                if arg is None:
                    raise ParseError(
                        f"unbound parameter {pname} in ({step.schema.name} ...)",
                        kind="unbound-parameter",
                    )
                if arg.kind == OPTIMISTIC and arg.payload is None:
                    raise ParseError(
                        f"unbound parameter {pname} in ({step.schema.name} ...)",
                        kind="unbound-parameter",
                    )
                if arg.kind == OPTIMISTIC:
                    toks.append(
                        "%s=%s"
                        % (
                            pname.lstrip("?"),
                            ",".join(PLAN_FLOAT_FORMAT % v for v in arg.payload),
                        )
                    )
                else:
                    toks.append(arg.id)
        lines.append("(%s)" % " ".join(toks))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_plan(source: str) -> list[PlanStep]:
    """Re-read a serialized plan into structural PlanSteps."""
    steps = []
    for expr in _read_sexprs(source, "<plan>"):
        if not isinstance(expr, list) or not expr:
            line, col = _loc(expr)
            raise ParseError("expected a plan action", line, col, "syntax")
        name = str(_expect_symbol(expr[0], "action name"))
        args = []
        for tok in expr[1:]:
            t = str(_expect_symbol(tok, "argument"))
            if "=" in t:
                pname, _, rest = t.partition("=")
                vals = tuple(float(x) for x in rest.split(","))
                args.append((pname, vals))
            else:
                args.append(t)
        steps.append(PlanStep(name, tuple(args)))
    return steps
