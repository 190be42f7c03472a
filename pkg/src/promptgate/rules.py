"""Rule DSL: parsing, printing, and evaluation.

Grammar (normative):

    rule      := ID ":" STAGE "WHEN" expr "THEN" ACTION ["PRIORITY" INT] "REQ" reqlist
    STAGE     := "INPUT" | "OUTPUT" | "MONITOR"
    expr      := term {"OR" term} ; term := factor {"AND" factor}
    factor    := "NOT" factor | "(" expr ")" | atom
    atom      := operand CMP NUMBER
    operand   := "pp" | "cl" | "cs" | "score(" ID ")"
    CMP       := ">" | ">=" | "<" | "<=" | "==" | "!="
    ACTION    := "PASS" | "TRIGGER_ASSESSMENT" | "FLAG_ANOMALY" | "BLOCK" | "FLAG_INCIDENT"
    reqlist   := REQID {"," REQID} ; REQID := "R" INT

Precedence is NOT > AND > OR. Every rule fires independently; a decision's
verdict is the maximum-severity action among fired rules.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

from .errors import EvaluationError, ParseError

RULE_STAGES = ("input", "output", "monitor")

# Ascending severity; index is the severity rank.
ACTIONS = ("PASS", "TRIGGER_ASSESSMENT", "FLAG_ANOMALY", "BLOCK", "FLAG_INCIDENT")
COMPARATORS = (">", ">=", "<", "<=", "==", "!=")
METRIC_TERMS = ("pp", "cl", "cs")


def severity(action: str) -> int:
    return ACTIONS.index(action)


# --- AST ----------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    term: str  # "pp" | "cl" | "cs" | "score(<id>)"
    comparator: str
    value: float


@dataclass(frozen=True)
class NotNode:
    child: "RuleAst"


@dataclass(frozen=True)
class AndNode:
    left: "RuleAst"
    right: "RuleAst"


@dataclass(frozen=True)
class OrNode:
    left: "RuleAst"
    right: "RuleAst"


RuleAst = Union[Atom, NotNode, AndNode, OrNode]


@dataclass(frozen=True)
class Rule:
    id: str
    stage: str
    condition: RuleAst
    action: str
    priority: int = 0
    requirement_links: frozenset[str] = field(default_factory=frozenset)


@dataclass(frozen=True)
class Decision:
    verdict: str
    fired_rules: tuple[str, ...]
    bindings: dict
    registry_version: int = 0

    def severity(self) -> int:
        return severity(self.verdict)


def ast_terms(node: RuleAst) -> set[str]:
    """All distinct terms referenced by a condition."""
    if isinstance(node, Atom):
        return {node.term}
    if isinstance(node, NotNode):
        return ast_terms(node.child)
    return ast_terms(node.left) | ast_terms(node.right)


def rule_detector_refs(rule: Rule) -> set[str]:
    """Detector ids referenced via score(...) atoms."""
    return {t[len("score(") : -1] for t in ast_terms(rule.condition) if t.startswith("score(")}


# --- lexer ----------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[^\S\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<cmp>>=|<=|==|!=|>|<)
  | (?P<punct>[():,])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"WHEN", "THEN", "PRIORITY", "REQ", "OR", "AND", "NOT",
             "INPUT", "OUTPUT", "MONITOR", *ACTIONS}


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "number" | "cmp" | "punct" | "eof"
    text: str
    line: int
    column: int


def _lex(source: str) -> list[Token]:
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(source):
        match = _TOKEN_RE.match(source, pos)
        if not match:
            raise ParseError(f"unexpected character {source[pos]!r}", line, col)
        kind = match.lastgroup
        text = match.group()
        if kind == "newline":
            line += 1
            col = 1
        else:
            if kind not in ("ws", "comment"):
                tokens.append(Token(kind, text, line, col))
            col += len(text)
        pos = match.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


# --- parser ---------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.current
        self.pos += 1
        return tok

    def fail(self, message: str) -> ParseError:
        tok = self.current
        shown = tok.text or "end of input"
        return ParseError(f"{message}, found {shown!r}", tok.line, tok.column)

    def expect(self, kind: str, text: str | None = None, what: str = "") -> Token:
        tok = self.current
        if tok.kind != kind or (text is not None and tok.text != text):
            raise self.fail(f"expected {what or text or kind}")
        return self.advance()

    def parse_rule(self) -> Rule:
        id_tok = self.expect("ident", what="rule id")
        if id_tok.text in _KEYWORDS:
            raise ParseError(f"reserved word {id_tok.text!r} cannot be a rule id", id_tok.line, id_tok.column)
        self.expect("punct", ":", what="':' after rule id")
        stage_tok = self.expect("ident", what="stage (INPUT | OUTPUT | MONITOR)")
        if stage_tok.text not in ("INPUT", "OUTPUT", "MONITOR"):
            raise ParseError(f"unknown stage {stage_tok.text!r}", stage_tok.line, stage_tok.column)
        self.expect("ident", "WHEN", what="'WHEN'")
        condition = self.parse_expr()
        self.expect("ident", "THEN", what="'THEN'")
        action_tok = self.expect("ident", what="action")
        if action_tok.text not in ACTIONS:
            raise ParseError(f"unknown action {action_tok.text!r}", action_tok.line, action_tok.column)
        priority = 0
        if self.current.kind == "ident" and self.current.text == "PRIORITY":
            self.advance()
            num_tok = self.expect("number", what="priority integer")
            try:
                priority = int(num_tok.text)
            except ValueError:
                raise ParseError(f"priority must be an integer, got {num_tok.text!r}",
                                 num_tok.line, num_tok.column) from None
        req_tok = self.current
        if not (req_tok.kind == "ident" and req_tok.text == "REQ"):
            raise ParseError("rule is missing its requirement links ('REQ R#,...')",
                             req_tok.line, req_tok.column)
        self.advance()
        links = [self.parse_reqid()]
        while self.current.kind == "punct" and self.current.text == ",":
            self.advance()
            links.append(self.parse_reqid())
        return Rule(
            id=id_tok.text,
            stage=stage_tok.text.lower(),
            condition=condition,
            action=action_tok.text,
            priority=priority,
            requirement_links=frozenset(links),
        )

    def parse_reqid(self) -> str:
        tok = self.expect("ident", what="requirement id (R<int>)")
        if not re.fullmatch(r"R\d+", tok.text):
            raise ParseError(f"requirement id must look like R<int>, got {tok.text!r}",
                             tok.line, tok.column)
        return tok.text

    def parse_expr(self) -> RuleAst:
        node = self.parse_term()
        while self.current.kind == "ident" and self.current.text == "OR":
            self.advance()
            node = OrNode(node, self.parse_term())
        return node

    def parse_term(self) -> RuleAst:
        node = self.parse_factor()
        while self.current.kind == "ident" and self.current.text == "AND":
            self.advance()
            node = AndNode(node, self.parse_factor())
        return node

    def parse_factor(self) -> RuleAst:
        tok = self.current
        if tok.kind == "ident" and tok.text == "NOT":
            self.advance()
            return NotNode(self.parse_factor())
        if tok.kind == "punct" and tok.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect("punct", ")", what="')'")
            return node
        return self.parse_atom()

    def parse_atom(self) -> Atom:
        tok = self.expect("ident", what="operand (pp, cl, cs, or score(<id>))")
        if tok.text == "score":
            self.expect("punct", "(", what="'(' after score")
            id_tok = self.expect("ident", what="detector id")
            self.expect("punct", ")", what="')'")
            term = f"score({id_tok.text})"
        elif tok.text in METRIC_TERMS:
            term = tok.text
        else:
            raise ParseError(f"unknown term {tok.text!r}", tok.line, tok.column)
        cmp_tok = self.expect("cmp", what="comparator")
        num_tok = self.expect("number", what="numeric constant")
        return Atom(term, cmp_tok.text, float(num_tok.text))


def parse_rule(source_text: str) -> Rule:
    """Parse a single rule; raises ParseError with line/column on any defect."""
    parser = _Parser(_lex(source_text))
    rule = parser.parse_rule()
    if parser.current.kind != "eof":
        raise parser.fail("unexpected trailing input")
    return rule


def parse_rules(source_text: str) -> list[Rule]:
    """Parse a whole rules file (any number of rules; '#' comments allowed)."""
    parser = _Parser(_lex(source_text))
    rules = []
    while parser.current.kind != "eof":
        rules.append(parser.parse_rule())
    ids = [r.id for r in rules]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ParseError(f"duplicate rule ids: {', '.join(dupes)}", 1, 1)
    return rules


# --- printer --------------------------------------------------------------------

def _format_number(value: float) -> str:
    return repr(value)


def print_ast(node: RuleAst) -> str:
    if isinstance(node, Atom):
        return f"{node.term} {node.comparator} {_format_number(node.value)}"
    if isinstance(node, NotNode):
        inner = print_ast(node.child)
        if isinstance(node.child, (AndNode, OrNode)):
            inner = f"({inner})"
        return f"NOT {inner}"
    if isinstance(node, AndNode):
        # Parenthesize OR children (lower precedence) and right-nested ANDs
        # (the grammar is left-associative) so the structure survives reparse.
        left = print_ast(node.left)
        if isinstance(node.left, OrNode):
            left = f"({left})"
        right = print_ast(node.right)
        if isinstance(node.right, (OrNode, AndNode)):
            right = f"({right})"
        return f"{left} AND {right}"
    if isinstance(node, OrNode):
        left = print_ast(node.left)
        right = print_ast(node.right)
        if isinstance(node.right, OrNode):
            right = f"({right})"
        return f"{left} OR {right}"
    raise TypeError(f"not a rule AST node: {node!r}")


def print_rule(rule: Rule) -> str:
    """Canonical text form; parse(print_rule(r)) reproduces r exactly."""
    reqs = ",".join(sorted(rule.requirement_links, key=lambda r: int(r[1:])))
    return (
        f"{rule.id}: {rule.stage.upper()} WHEN {print_ast(rule.condition)} "
        f"THEN {rule.action} PRIORITY {rule.priority} REQ {reqs}"
    )


# --- evaluation -----------------------------------------------------------------

def _compare(value: float, comparator: str, constant: float) -> bool:
    if comparator == ">":
        return value > constant
    if comparator == ">=":
        return value >= constant
    if comparator == "<":
        return value < constant
    if comparator == "<=":
        return value <= constant
    if comparator == "==":
        return value == constant
    return value != constant


def eval_ast(node: RuleAst, env: Mapping[str, float], rule_id: str = "?") -> bool:
    if isinstance(node, Atom):
        if node.term not in env:
            raise EvaluationError(f"rule {rule_id}: term {node.term!r} has no binding")
        return _compare(float(env[node.term]), node.comparator, node.value)
    if isinstance(node, NotNode):
        return not eval_ast(node.child, env, rule_id)
    if isinstance(node, AndNode):
        return eval_ast(node.left, env, rule_id) and eval_ast(node.right, env, rule_id)
    if isinstance(node, OrNode):
        return eval_ast(node.left, env, rule_id) or eval_ast(node.right, env, rule_id)
    raise TypeError(f"not a rule AST node: {node!r}")


def evaluate_rules(
    rules: Sequence[Rule],
    env: Mapping[str, float],
    stage: str,
    registry_version: int = 0,
) -> Decision:
    """Fire every stage-matching rule whose condition holds.

    Fired rules are recorded in ascending priority (ties by id); the verdict is
    the maximum severity among fired actions, PASS when nothing fired.
    """
    fired = []
    referenced: set[str] = set()
    for rule in rules:
        if rule.stage != stage:
            continue
        terms = ast_terms(rule.condition)
        missing = sorted(terms - set(env))
        if missing:
            raise EvaluationError(f"rule {rule.id}: term {missing[0]!r} has no binding")
        referenced |= terms
        if eval_ast(rule.condition, env, rule.id):
            fired.append(rule)
    fired.sort(key=lambda r: (r.priority, r.id))
    verdict = "PASS"
    for rule in fired:
        if severity(rule.action) > severity(verdict):
            verdict = rule.action
    bindings = {term: env[term] for term in sorted(referenced) if term in env}
    return Decision(
        verdict=verdict,
        fired_rules=tuple(r.id for r in fired),
        bindings=bindings,
        registry_version=registry_version,
    )


def rule_to_dict(rule: Rule) -> dict:
    return {
        "id": rule.id,
        "stage": rule.stage,
        "source": print_rule(rule),
        "action": rule.action,
        "priority": rule.priority,
        "requirement_links": sorted(rule.requirement_links),
    }
