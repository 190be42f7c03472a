"""Requirement registry, assurance-case graphs, and context-aware mappings.

An assurance case is an acyclic claim/strategy/evidence graph: evidence nodes
point at concrete artifacts (reports, test runs), claims link compliance
requirement ids, and edges run upward (evidence -> strategy -> claim or
evidence -> claim). A case is *complete* when every claim is reachable from at
least one evidence node; only complete cases count towards requirement
coverage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigurationError, ValidationError

NODE_KINDS = ("claim", "strategy", "evidence")
_KIND_RANK = {"evidence": 0, "strategy": 1, "claim": 2}

DEFAULT_CONTEXT_KEY = "default"


@dataclass(frozen=True)
class Requirement:
    id: str
    text: str
    source: str


def load_requirement_registry() -> list[Requirement]:
    """The read-only shipped registry (ids R0..R16)."""
    raw = resources.files("promptgate.data").joinpath("requirements.json").read_text("utf-8")
    payload = json.loads(raw)
    return [Requirement(r["id"], r["text"], r["source"]) for r in payload["requirements"]]


def requirement_sort_key(req_id: str) -> int:
    return int(req_id[1:])


@dataclass(frozen=True)
class CaseNode:
    node_id: str
    kind: str
    text: str
    requirement_links: frozenset[str] = field(default_factory=frozenset)  # claims only
    evidence_ref: str = ""  # evidence only


@dataclass(frozen=True)
class AssuranceCase:
    id: str
    nodes: tuple[CaseNode, ...]
    edges: tuple[tuple[str, str], ...]  # (supporting, supported)

    def node(self, node_id: str) -> CaseNode | None:
        for node in self.nodes:
            if node.node_id == node_id:
                return node
        return None


@dataclass(frozen=True)
class Defect:
    code: str  # cycle | kind-order | unsupported-claim | dangling-edge | duplicate-node
    detail: str


def validate_case(case: AssuranceCase) -> list[Defect]:
    """Structural defects of one case; empty list iff well-formed and complete."""
    defects = []
    ids = [n.node_id for n in case.nodes]
    for dup in sorted({i for i in ids if ids.count(i) > 1}):
        defects.append(Defect("duplicate-node", f"case {case.id}: node id {dup!r} repeats"))
    by_id = {n.node_id: n for n in case.nodes}

    adjacency: dict[str, list[str]] = {i: [] for i in by_id}
    for src, dst in case.edges:
        missing = [e for e in (src, dst) if e not in by_id]
        if missing:
            defects.append(Defect("dangling-edge", f"case {case.id}: edge {src}->{dst} references unknown node(s) {missing}"))
            continue
        if _KIND_RANK[by_id[src].kind] >= _KIND_RANK[by_id[dst].kind]:
            defects.append(Defect(
                "kind-order",
                f"case {case.id}: edge {src}->{dst} violates evidence->strategy->claim ordering "
                f"({by_id[src].kind} cannot support {by_id[dst].kind})",
            ))
        adjacency[src].append(dst)

    # Cycle check over the well-anchored edges.
    state: dict[str, int] = {}

    def visit(node_id: str, stack: list[str]) -> bool:
        state[node_id] = 1
        stack.append(node_id)
        for nxt in adjacency[node_id]:
            if state.get(nxt) == 1:
                cycle = stack[stack.index(nxt):] + [nxt]
                defects.append(Defect("cycle", f"case {case.id}: cycle {' -> '.join(cycle)}"))
                return True
            if state.get(nxt, 0) == 0 and visit(nxt, stack):
                return True
        stack.pop()
        state[node_id] = 2
        return False

    for node_id in by_id:
        if state.get(node_id, 0) == 0 and visit(node_id, []):
            break

    for claim_id in sorted(_unsupported_claims(case)):
        defects.append(Defect("unsupported-claim", f"case {case.id}: claim {claim_id!r} is not reachable from any evidence"))
    return defects


def _unsupported_claims(case: AssuranceCase) -> set[str]:
    by_id = {n.node_id: n for n in case.nodes}
    adjacency: dict[str, set[str]] = {i: set() for i in by_id}
    for src, dst in case.edges:
        if src in by_id and dst in by_id:
            adjacency[src].add(dst)
    reachable = set()
    frontier = [n.node_id for n in case.nodes if n.kind == "evidence"]
    while frontier:
        current = frontier.pop()
        for nxt in adjacency[current]:
            if nxt not in reachable:
                reachable.add(nxt)
                frontier.append(nxt)
    return {n.node_id for n in case.nodes if n.kind == "claim" and n.node_id not in reachable}


def is_complete(case: AssuranceCase) -> bool:
    return not _unsupported_claims(case)


def coverage_of_requirements(
    cases: list[AssuranceCase], registry: list[Requirement]
) -> tuple[dict[str, list[str]], list[str]]:
    """Per-requirement supporting claim ids (complete cases only) and the uncovered list."""
    known = {r.id for r in registry}
    coverage: dict[str, list[str]] = {r.id: [] for r in registry}
    for case in cases:
        complete = is_complete(case)
        for node in case.nodes:
            if node.kind != "claim":
                continue
            for req_id in node.requirement_links:
                if req_id not in known:
                    raise ValidationError(
                        f"case {case.id}: claim {node.node_id} links unknown requirement {req_id!r}"
                    )
                if complete:
                    coverage[req_id].append(node.node_id)
    for claims in coverage.values():
        claims.sort()
    uncovered = sorted((rid for rid, claims in coverage.items() if not claims), key=requirement_sort_key)
    return coverage, uncovered


# --- context-aware mappings ----------------------------------------------------

@dataclass(frozen=True)
class ContextMapping:
    context_key: str
    active_rule_ids: frozenset[str]
    active_case_ids: frozenset[str]
    variable_bindings: dict


class ContextMappingSet:
    """Exact-match context lookup with a mandatory `default` fallback."""

    def __init__(self, mappings: list[ContextMapping]):
        keys = [m.context_key for m in mappings]
        defects = []
        if DEFAULT_CONTEXT_KEY not in keys:
            defects.append(f"context mappings are missing the reserved {DEFAULT_CONTEXT_KEY!r} key")
        dupes = sorted({k for k in keys if keys.count(k) > 1})
        if dupes:
            defects.append(f"duplicate context keys: {', '.join(dupes)}")
        if defects:
            raise ConfigurationError("invalid context mappings", defects)
        self._by_key = {m.context_key: m for m in mappings}

    def resolve(self, context_key: str) -> ContextMapping:
        return self._by_key.get(context_key, self._by_key[DEFAULT_CONTEXT_KEY])

    def all(self) -> list[ContextMapping]:
        return list(self._by_key.values())

    def validate_references(self, rule_ids: set[str], case_ids: set[str]) -> list[str]:
        defects = []
        for mapping in self._by_key.values():
            for rid in sorted(mapping.active_rule_ids - rule_ids):
                defects.append(f"context {mapping.context_key!r}: unknown rule id {rid!r}")
            for cid in sorted(mapping.active_case_ids - case_ids):
                defects.append(f"context {mapping.context_key!r}: unknown case id {cid!r}")
        return defects


# --- file formats ----------------------------------------------------------------

def case_from_dict(record: dict) -> AssuranceCase:
    try:
        nodes = tuple(
            CaseNode(
                node_id=n["node_id"],
                kind=n["kind"],
                text=n.get("text", ""),
                requirement_links=frozenset(n.get("requirement_links", [])),
                evidence_ref=n.get("evidence_ref", ""),
            )
            for n in record["nodes"]
        )
        edges = tuple((e[0], e[1]) for e in record.get("edges", []))
        case = AssuranceCase(id=record["id"], nodes=nodes, edges=edges)
    except (KeyError, TypeError, IndexError) as exc:
        raise ConfigurationError(f"malformed assurance case record: {exc}") from exc
    bad_kinds = [n.node_id for n in case.nodes if n.kind not in NODE_KINDS]
    if bad_kinds:
        raise ConfigurationError(f"case {case.id}: nodes with unknown kind: {bad_kinds}")
    return case


def case_to_dict(case: AssuranceCase) -> dict:
    return {
        "id": case.id,
        "nodes": [
            {
                "node_id": n.node_id,
                "kind": n.kind,
                "text": n.text,
                "requirement_links": sorted(n.requirement_links),
                "evidence_ref": n.evidence_ref,
            }
            for n in case.nodes
        ],
        "edges": [list(e) for e in case.edges],
    }


def load_cases_file(path: str | Path) -> list[AssuranceCase]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        cases = [case_from_dict(rec) for rec in payload["cases"]]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed assurance case file {path}: {exc}") from exc
    ids = [c.id for c in cases]
    if len(ids) != len(set(ids)):
        raise ConfigurationError(f"assurance case file {path}: case ids are not unique")
    return cases


def load_mappings_file(path: str | Path) -> ContextMappingSet:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        mappings = [
            ContextMapping(
                context_key=m["context_key"],
                active_rule_ids=frozenset(m.get("active_rule_ids", [])),
                active_case_ids=frozenset(m.get("active_case_ids", [])),
                variable_bindings=dict(m.get("variable_bindings", {})),
            )
            for m in payload["mappings"]
        ]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed context mapping file {path}: {exc}") from exc
    return ContextMappingSet(mappings)
