"""Document generators: instructions for use, technical documentation,
assessment renderings, and incident reports.

Documents are plain dicts with a fixed key order, serialized to stable JSON so
audit evidence is reproducible and diff-friendly. Sections state emptiness
explicitly ("no assessments yet") rather than disappearing, so an auditor can
tell "nothing to report" from "omitted". Timestamps are injected by the
caller; generation itself is a pure function of its inputs.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime
from typing import Sequence

from .assurance import AssuranceCase, Requirement, coverage_of_requirements, is_complete, validate_case
from .detectors import DetectorSpec
from .errors import IntegrityError
from .lifecycle import (
    AnomalyRecord,
    AssessmentReport,
    EventLog,
    IncidentRecord,
    RegistrySnapshot,
)
from .rules import print_rule

METRIC_DEFINITIONS = {
    "pp": "perplexity: how surprising the text is to the gateway's character-level "
          "language model (geometric-mean inverse probability; 1.0 means fully expected)",
    "cl": "context length: number of whitespace-separated tokens",
    "cs": "character set size: number of distinct characters",
}


def serialize_document(doc: dict) -> str:
    """Stable textual form: two-space indent, insertion key order preserved."""
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def _content_id(prefix: str, body: dict) -> str:
    hashable = {k: v for k, v in body.items() if k not in ("doc_id", "generated_at")}
    digest = hashlib.sha256(
        json.dumps(hashable, sort_keys=True, ensure_ascii=True).encode("utf-8")
    ).hexdigest()
    return f"{prefix}-{digest[:16]}"


def _detector_summary(spec: DetectorSpec) -> dict:
    summary = {
        "id": spec.id,
        "kind": spec.kind,
        "stage": spec.stage,
        "features": list(spec.features),
        "purpose": spec.purpose or f"{spec.kind} detector over {', '.join(spec.features) or 'output text'}",
        "requirement_links": sorted(spec.requirement_links),
    }
    if spec.kind == "threshold":
        summary["threshold"] = {"bound": spec.params["bound"], "direction": spec.params["direction"]}
    elif spec.kind == "logistic":
        summary["cutoff"] = spec.params.get("cutoff", 0.5)
    elif spec.kind == "keyword":
        summary["keyword_count"] = len(spec.params["keywords"])
    return summary


def generate_instructions(
    snapshot: RegistrySnapshot,
    cases: Sequence[AssuranceCase],
    system_name: str,
    generated_at: datetime,
    context_variables: dict | None = None,
) -> dict:
    """User-facing factsheet: what gates traffic, what its limits are."""
    deployed = [d for d in snapshot.detectors if d.is_deployed()]
    limitations = [
        "Keyword flags use substring matching and may over-flag benign wording.",
        "Perplexity is computed by an auxiliary character-level model, not the serving LLM.",
        "Detectors are statistical; novel attack styles may pass undetected until reconfiguration.",
    ]
    if not deployed:
        limitations.insert(0, "No active detectors: traffic is currently not gated.")
    trace = sorted(
        {"R9"} | {link for d in deployed for link in d.requirement_links},
        key=lambda r: int(r[1:]),
    )
    doc = {
        "doc_type": "instructions_for_use",
        "doc_id": "",
        "system_name": system_name,
        "registry_version": snapshot.version,
        "generated_at": generated_at.isoformat(),
        "deployed_detectors": [_detector_summary(d) for d in sorted(deployed, key=lambda d: d.id)],
        "metric_definitions": dict(METRIC_DEFINITIONS),
        "known_limitations": limitations,
        "requirement_trace": trace,
        "context_variables": dict(context_variables or {}),
    }
    doc["doc_id"] = _content_id("ifu", doc)
    return doc


def generate_technical_documentation(
    snapshot: RegistrySnapshot,
    cases: Sequence[AssuranceCase],
    assessment_history: Sequence[AssessmentReport],
    log_stats: dict,
    requirements: Sequence[Requirement],
    system_name: str,
    generated_at: datetime,
    context_variables: dict | None = None,
) -> dict:
    """Auditor/developer factsheet: everything in the instructions plus internals."""
    instructions = generate_instructions(snapshot, cases, system_name, generated_at, context_variables)
    training_reports = {
        d.id: d.params["training_report"]
        for d in snapshot.detectors
        if d.kind == "logistic" and d.params.get("training_report")
    }
    if assessment_history:
        latest = assessment_history[-1]
        assessment_section = {
            "status": "available",
            "latest": render_assessment(latest),
            "history_length": len(assessment_history),
        }
    else:
        assessment_section = {"status": "no assessments yet", "latest": None, "history_length": 0}
    coverage, uncovered = coverage_of_requirements(list(cases), list(requirements))
    case_summaries = [
        {
            "id": case.id,
            "complete": is_complete(case),
            "defects": [f"{d.code}: {d.detail}" for d in validate_case(case)],
        }
        for case in cases
    ]
    doc = {
        "doc_type": "technical_documentation",
        "doc_id": "",
        "system_name": system_name,
        "registry_version": snapshot.version,
        "generated_at": generated_at.isoformat(),
        "deployed_detectors": instructions["deployed_detectors"],
        "all_detectors": [_detector_summary(d) for d in sorted(snapshot.detectors, key=lambda d: d.id)],
        "detector_parameters": {
            d.id: {k: v for k, v in d.params.items() if k != "training_report"}
            for d in sorted(snapshot.detectors, key=lambda d: d.id)
        },
        "training_reports": training_reports,
        "rules": [
            {
                "id": r.id,
                "stage": r.stage,
                "source": print_rule(r),
                "requirement_links": sorted(r.requirement_links),
            }
            for r in sorted(snapshot.rules, key=lambda r: r.id)
        ],
        "assessment": assessment_section,
        "assurance_cases": case_summaries,
        "requirement_coverage": {rid: coverage[rid] for rid in sorted(coverage, key=lambda r: int(r[1:]))},
        "uncovered_requirements": uncovered,
        "metric_definitions": dict(METRIC_DEFINITIONS),
        "known_limitations": instructions["known_limitations"],
        "event_counts": {k: log_stats[k] for k in sorted(log_stats)},
        "context_variables": dict(context_variables or {}),
    }
    doc["doc_id"] = _content_id("tdoc", doc)
    return doc


def render_assessment(report: AssessmentReport) -> dict:
    """Ranked combo table with the deployed combination highlighted."""
    rows = []
    for rank, combo in enumerate(report.combos, start=1):
        rows.append({
            "rank": rank,
            "combo_id": combo.combo_id,
            "detector_ids": list(combo.detector_ids),
            "coverage": combo.coverage,
            "accuracy": combo.accuracy,
            "false_positive_rate": combo.false_positive_rate,
            "deployed": combo.combo_id == report.deployed_combo_id,
        })
    if not report.combos:
        recommendation = "no combinations assessed"
    elif report.deployed_combo_id == report.combos[0].combo_id:
        recommendation = "retain"
    else:
        recommendation = f"switch to {report.combos[0].combo_id}"
    doc = {
        "doc_type": "assessment",
        "doc_id": "",
        "assessment_id": report.id,
        "registry_version": report.registry_version,
        "generated_at": report.created_at.isoformat(),
        "window_size": len(report.window),
        "deployed_combo_id": report.deployed_combo_id,
        "table": rows,
        "recommendation": recommendation,
    }
    doc["doc_id"] = _content_id("asmdoc", doc)
    return doc


def assessment_table_delimited(doc: dict, sep: str = "\t") -> str:
    """The combo table as delimited text, one row per combination."""
    header = sep.join(["rank", "combo_id", "coverage", "accuracy", "false_positive_rate", "deployed"])
    lines = [header]
    for row in doc["table"]:
        lines.append(sep.join([
            str(row["rank"]),
            row["combo_id"],
            f"{row['coverage']:.6f}",
            f"{row['accuracy']:.6f}",
            f"{row['false_positive_rate']:.6f}",
            "yes" if row["deployed"] else "no",
        ]))
    return "\n".join(lines) + "\n"


def render_incident_report(
    incident: IncidentRecord,
    anomaly: AnomalyRecord,
    log: EventLog,
    request_record: dict | None = None,
) -> dict:
    """Self-contained incident document with the full causal chain from the log."""
    for seq in (*anomaly.event_seqs, *incident.event_seqs):
        if log.get(seq) is None:
            raise IntegrityError(
                f"incident {incident.id}: referenced event seq {seq} is missing from the log"
            )
    refs = {incident.id, anomaly.id}
    if anomaly.prompt_ref:
        refs.add(anomaly.prompt_ref)
    if anomaly.output_ref:
        refs.add(anomaly.output_ref)
    chain = [e for e in log.events() if e.payload_ref in refs]
    chain.sort(key=lambda e: e.seq)
    if incident.causal_link == "none":
        justification = (
            "No causal link between the system and the incident has been established; "
            "recorded explicitly per the reporting obligation. " + (incident.narrative or "")
        ).strip()
    else:
        justification = incident.narrative or f"causal link assessed as {incident.causal_link}"
    doc = {
        "doc_type": "incident_report",
        "doc_id": "",
        "incident_id": incident.id,
        "anomaly_id": anomaly.id,
        "severity": incident.severity,
        "causal_link": incident.causal_link,
        "causal_link_justification": justification,
        "notified": incident.notified,
        "created_at": incident.created_at.isoformat(),
        "generated_at": incident.created_at.isoformat(),
        "triggering_prompt_ref": anomaly.prompt_ref,
        "flagged_output_ref": anomaly.output_ref,
        "trigger": list(anomaly.trigger),
        "request": request_record or {"status": "request record unavailable"},
        "related_events": [
            {
                "seq": e.seq,
                "action_id": e.action_id,
                "actor": e.actor,
                "timestamp": e.timestamp.isoformat(),
                "payload_ref": e.payload_ref,
                "note": e.note,
            }
            for e in chain
        ],
    }
    doc["doc_id"] = _content_id("incdoc", doc)
    return doc
