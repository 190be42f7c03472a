"""Audit lifecycle: append-only action-event log, anomaly/incident escalation,
counterfactual assessment of detector combinations, sustained-coverage checks,
and atomic registry reconfiguration.

The event log is the system of record: one JSON object per line with a stable
field order, so auditors can grep it and replaying it reconstructs the history
of registry versions and decisions.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from itertools import combinations
from pathlib import Path
from typing import Callable, Sequence

from .detectors import (
    DetectorSpec,
    LabeledPrompt,
    score_detector,
    spec_from_dict,
    spec_to_dict,
    validate_spec,
)
from .errors import AuthorizationError, ConfigurationError, DataError, StateError, ValidationError
from .metrics import MetricVector
from .rules import Decision, Rule, parse_rule, print_rule, rule_detector_refs, severity

ACTORS = ("user", "aisdeveloper", "llmdeveloper", "auditor", "system")
ANOMALY_STATUSES = ("open", "dismissed", "escalated")
INCIDENT_SEVERITIES = ("minor", "serious")
CAUSAL_LINKS = ("definite", "reasonably_likely", "suspected", "none")

_EVENT_FIELDS = ("seq", "action_id", "actor", "timestamp", "payload_ref", "registry_version", "note")

Clock = Callable[[], datetime]


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def _load_action_ids() -> dict[str, str]:
    raw = resources.files("promptgate.data").joinpath("actions.json").read_text("utf-8")
    return {a["id"]: a["description"] for a in json.loads(raw)["actions"]}


ACTION_DESCRIPTIONS = _load_action_ids()
ACTION_IDS = tuple(ACTION_DESCRIPTIONS)


@dataclass(frozen=True)
class ActionEvent:
    seq: int
    action_id: str
    actor: str
    timestamp: datetime
    payload_ref: str
    registry_version: int
    note: str = ""

    def to_line(self) -> str:
        record = {
            "seq": self.seq,
            "action_id": self.action_id,
            "actor": self.actor,
            "timestamp": self.timestamp.isoformat(),
            "payload_ref": self.payload_ref,
            "registry_version": self.registry_version,
            "note": self.note,
        }
        return json.dumps(record, ensure_ascii=False)

    @staticmethod
    def from_line(line: str) -> "ActionEvent":
        record = json.loads(line)
        return ActionEvent(
            seq=int(record["seq"]),
            action_id=record["action_id"],
            actor=record["actor"],
            timestamp=datetime.fromisoformat(record["timestamp"]),
            payload_ref=record["payload_ref"],
            registry_version=int(record["registry_version"]),
            note=record.get("note", ""),
        )


class EventLog:
    """Append-only, single-writer event log.

    All appends are serialized through one lock and flushed to disk before the
    sequence number is returned; concurrent readers always see a consistent
    prefix.
    """

    def __init__(self, path: str | Path | None = None, clock: Clock = utc_now):
        self._lock = threading.Lock()
        self._clock = clock
        self._events: list[ActionEvent] = []
        self._path = Path(path) if path is not None else None
        self._fh = None
        if self._path is not None:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            if self._path.exists():
                for line in self._path.read_text(encoding="utf-8").splitlines():
                    if line.strip():
                        self._events.append(ActionEvent.from_line(line))
            self._fh = self._path.open("a", encoding="utf-8")

    def record(
        self,
        action_id: str,
        actor: str,
        payload_ref: str = "",
        registry_version: int = 0,
        note: str = "",
        timestamp: datetime | None = None,
    ) -> ActionEvent:
        """Validate, assign the next seq, persist, and return the event."""
        if action_id not in ACTION_DESCRIPTIONS:
            raise ValidationError(f"unknown action id {action_id!r} (valid: A0..A18)")
        if actor not in ACTORS:
            raise ValidationError(f"unknown actor {actor!r}")
        with self._lock:
            event = ActionEvent(
                seq=len(self._events) + 1,
                action_id=action_id,
                actor=actor,
                timestamp=timestamp or self._clock(),
                payload_ref=payload_ref,
                registry_version=registry_version,
                note=note,
            )
            if self._fh is not None:
                self._fh.write(event.to_line() + "\n")
                self._fh.flush()
                os.fsync(self._fh.fileno())
            self._events.append(event)
        return event

    def events(self, from_seq: int = 1, to_seq: int | None = None) -> list[ActionEvent]:
        with self._lock:
            snapshot = list(self._events)
        return [e for e in snapshot if e.seq >= from_seq and (to_seq is None or e.seq <= to_seq)]

    def get(self, seq: int) -> ActionEvent | None:
        events = self.events(from_seq=seq, to_seq=seq)
        return events[0] if events else None

    def __len__(self) -> int:
        with self._lock:
            return len(self._events)

    def action_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for event in self.events():
            counts[event.action_id] = counts.get(event.action_id, 0) + 1
        return counts

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def record_event(log: EventLog, event: ActionEvent) -> int:
    """Append a pre-built event (seq is reassigned by the log)."""
    stored = log.record(
        action_id=event.action_id,
        actor=event.actor,
        payload_ref=event.payload_ref,
        registry_version=event.registry_version,
        note=event.note,
        timestamp=event.timestamp,
    )
    return stored.seq


# --- anomaly / incident records ---------------------------------------------------

@dataclass
class AnomalyRecord:
    id: str
    prompt_ref: str
    output_ref: str
    trigger: tuple[str, ...]
    status: str
    created_at: datetime
    event_seqs: tuple[int, ...] = ()
    incident_ref: str = ""


@dataclass
class IncidentRecord:
    id: str
    anomaly_ref: str
    severity: str
    causal_link: str
    notified: bool
    narrative: str
    created_at: datetime
    event_seqs: tuple[int, ...] = ()


class RecordStore:
    """Id-addressed store, optionally write-through to one JSON file per record."""

    def __init__(self, directory: str | Path | None = None, serializer=None, deserializer=None):
        self._records: dict[str, object] = {}
        self._dir = Path(directory) if directory is not None else None
        self._serializer = serializer
        self._deserializer = deserializer
        self._lock = threading.Lock()
        if self._dir is not None:
            self._dir.mkdir(parents=True, exist_ok=True)
            if self._deserializer:
                for file in sorted(self._dir.glob("*.json")):
                    record = self._deserializer(json.loads(file.read_text(encoding="utf-8")))
                    self._records[file.stem] = record

    def put(self, record_id: str, record) -> None:
        with self._lock:
            self._records[record_id] = record
            if self._dir is not None and self._serializer:
                path = self._dir / f"{record_id}.json"
                path.write_text(
                    json.dumps(self._serializer(record), indent=2, ensure_ascii=False) + "\n",
                    encoding="utf-8",
                )

    def get(self, record_id: str):
        with self._lock:
            return self._records.get(record_id)

    def all(self) -> list:
        with self._lock:
            return [self._records[k] for k in sorted(self._records)]

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)


def flag_anomaly(
    log: EventLog,
    anomalies: RecordStore,
    decision: Decision,
    prompt_ref: str,
    output_ref: str = "",
    actor: str = "system",
    clock: Clock = utc_now,
) -> AnomalyRecord:
    """Open an anomaly for a decision of severity >= FLAG_ANOMALY; emits A13 and A14."""
    if decision.severity() < severity("FLAG_ANOMALY"):
        raise StateError(
            f"cannot flag an anomaly for a {decision.verdict} decision "
            "(severity below FLAG_ANOMALY)"
        )
    anomaly_id = f"anm-{len(anomalies) + 1:06d}"
    e13 = log.record("A13", actor, payload_ref=anomaly_id,
                     registry_version=decision.registry_version,
                     note=f"prompt={prompt_ref} output={output_ref or '-'}")
    e14 = log.record("A14", actor, payload_ref=anomaly_id,
                     registry_version=decision.registry_version,
                     note=f"fired={','.join(decision.fired_rules)}")
    record = AnomalyRecord(
        id=anomaly_id,
        prompt_ref=prompt_ref,
        output_ref=output_ref,
        trigger=tuple(decision.fired_rules),
        status="open",
        created_at=clock(),
        event_seqs=(e13.seq, e14.seq),
    )
    anomalies.put(anomaly_id, record)
    return record


def promote_to_incident(
    log: EventLog,
    anomalies: RecordStore,
    incidents: RecordStore,
    anomaly: AnomalyRecord,
    incident_severity: str,
    causal_link: str,
    narrative: str,
    actor: str = "aisdeveloper",
    clock: Clock = utc_now,
    registry_version: int = 0,
) -> IncidentRecord:
    """Escalate an open anomaly; serious incidents queue a notification obligation."""
    if anomaly.status != "open":
        raise StateError(f"anomaly {anomaly.id} is {anomaly.status}, only open anomalies can be promoted")
    if incident_severity not in INCIDENT_SEVERITIES:
        raise ValidationError(f"unknown incident severity {incident_severity!r}")
    if causal_link not in CAUSAL_LINKS:
        raise ValidationError(f"unknown causal link {causal_link!r} (valid: {CAUSAL_LINKS})")
    incident_id = f"inc-{len(incidents) + 1:06d}"
    e17 = log.record("A17", actor, payload_ref=incident_id,
                     registry_version=registry_version,
                     note=f"anomaly={anomaly.id} severity={incident_severity} causal_link={causal_link}")
    incident = IncidentRecord(
        id=incident_id,
        anomaly_ref=anomaly.id,
        severity=incident_severity,
        causal_link=causal_link,
        notified=False,
        narrative=narrative,
        created_at=clock(),
        event_seqs=(e17.seq,),
    )
    incidents.put(incident_id, incident)
    anomaly.status = "escalated"
    anomaly.incident_ref = incident_id
    anomalies.put(anomaly.id, anomaly)
    return incident


def notify_incident(
    log: EventLog,
    incidents: RecordStore,
    incident: IncidentRecord,
    actor: str,
    registry_version: int = 0,
) -> IncidentRecord:
    """Mark the supervising stakeholder as notified; emits A18."""
    e18 = log.record("A18", actor, payload_ref=incident.id,
                     registry_version=registry_version,
                     note=f"severity={incident.severity}")
    incident.notified = True
    incident.event_seqs = incident.event_seqs + (e18.seq,)
    incidents.put(incident.id, incident)
    return incident


def pending_notification_obligations(incidents: RecordStore) -> list[IncidentRecord]:
    """Serious incidents that have not yet been notified; never silently dropped."""
    return [i for i in incidents.all() if i.severity == "serious" and not i.notified]


# --- registry snapshots -------------------------------------------------------------

@dataclass(frozen=True)
class RegistrySnapshot:
    version: int
    detectors: tuple[DetectorSpec, ...]
    rules: tuple[Rule, ...]
    effective_from: datetime

    def detector(self, detector_id: str) -> DetectorSpec | None:
        for spec in self.detectors:
            if spec.id == detector_id:
                return spec
        return None

    def input_detectors(self) -> list[DetectorSpec]:
        return [d for d in self.detectors if d.stage == "input"]

    def deployed_input_ids(self) -> tuple[str, ...]:
        return tuple(sorted(d.id for d in self.input_detectors() if d.is_deployed()))


@dataclass(frozen=True)
class RegistryDelta:
    """Reconfiguration payload: upserts replace by id, removals drop by id.

    Rules travel as DSL source text so a delta is auditable as plain text.
    """

    upsert_detectors: tuple[DetectorSpec, ...] = ()
    remove_detector_ids: tuple[str, ...] = ()
    upsert_rules: tuple[str, ...] = ()
    remove_rule_ids: tuple[str, ...] = ()
    note: str = ""

    def summary(self) -> str:
        parts = []
        if self.upsert_detectors:
            parts.append("detectors~" + ",".join(d.id for d in self.upsert_detectors))
        if self.remove_detector_ids:
            parts.append("detectors-" + ",".join(self.remove_detector_ids))
        if self.upsert_rules:
            parts.append(f"rules~{len(self.upsert_rules)}")
        if self.remove_rule_ids:
            parts.append("rules-" + ",".join(self.remove_rule_ids))
        if self.note:
            parts.append(self.note)
        return "; ".join(parts) if parts else "no-op"


def validate_registry(detectors: Sequence[DetectorSpec], rules: Sequence[Rule]) -> list[str]:
    """Cross-cutting registry defects: spec invariants, id uniqueness, rule references."""
    defects = []
    for spec in detectors:
        defects.extend(validate_spec(spec))
    detector_ids = [d.id for d in detectors]
    for dup in sorted({i for i in detector_ids if detector_ids.count(i) > 1}):
        defects.append(f"duplicate detector id {dup!r}")
    rule_ids = [r.id for r in rules]
    for dup in sorted({i for i in rule_ids if rule_ids.count(i) > 1}):
        defects.append(f"duplicate rule id {dup!r}")
    known = set(detector_ids)
    for rule in rules:
        if not rule.requirement_links:
            defects.append(f"rule {rule.id}: requirement_links must be nonempty")
        for ref in sorted(rule_detector_refs(rule) - known):
            defects.append(f"rule {rule.id}: references unknown detector {ref!r}")
    return defects


def apply_reconfiguration(
    log: EventLog,
    current: RegistrySnapshot,
    change: RegistryDelta,
    actor: str,
    clock: Clock = utc_now,
) -> RegistrySnapshot:
    """Validate and publish version+1; the current snapshot is never mutated."""
    if actor != "aisdeveloper":
        raise AuthorizationError(f"actor {actor!r} may not reconfigure the registry")
    detectors = {d.id: d for d in current.detectors}
    for spec in change.upsert_detectors:
        detectors[spec.id] = spec
    for detector_id in change.remove_detector_ids:
        if detector_id not in detectors:
            raise ConfigurationError(f"cannot remove unknown detector {detector_id!r}")
        del detectors[detector_id]
    rules = {r.id: r for r in current.rules}
    for source in change.upsert_rules:
        rule = parse_rule(source)
        rules[rule.id] = rule
    for rule_id in change.remove_rule_ids:
        if rule_id not in rules:
            raise ConfigurationError(f"cannot remove unknown rule {rule_id!r}")
        del rules[rule_id]

    new_detectors = tuple(detectors[k] for k in sorted(detectors))
    new_rules = tuple(rules[k] for k in sorted(rules))
    defects = validate_registry(new_detectors, new_rules)
    if defects:
        raise ConfigurationError("reconfiguration rejected", defects)
    snapshot = RegistrySnapshot(
        version=current.version + 1,
        detectors=new_detectors,
        rules=new_rules,
        effective_from=clock(),
    )
    log.record("A12", actor, payload_ref=f"registry-v{snapshot.version}",
               registry_version=snapshot.version, note=change.summary())
    return snapshot


def snapshot_to_dict(snapshot: RegistrySnapshot) -> dict:
    return {
        "version": snapshot.version,
        "effective_from": snapshot.effective_from.isoformat(),
        "detectors": [spec_to_dict(d) for d in snapshot.detectors],
        "rules": [print_rule(r) for r in snapshot.rules],
    }


# --- counterfactual assessment -------------------------------------------------------

@dataclass(frozen=True)
class ComboResult:
    detector_ids: tuple[str, ...]
    coverage: float
    accuracy: float
    false_positive_rate: float

    @property
    def combo_id(self) -> str:
        return "+".join(self.detector_ids)


@dataclass(frozen=True)
class AssessmentReport:
    id: str
    window: tuple[str, ...]
    combos: tuple[ComboResult, ...]
    deployed_combo_id: str | None
    recommendation: tuple[str, ...]
    created_at: datetime
    registry_version: int

    def deployed_coverage(self) -> float:
        for combo in self.combos:
            if combo.combo_id == self.deployed_combo_id:
                return combo.coverage
        return 0.0

    def combo(self, combo_id: str) -> ComboResult | None:
        for combo in self.combos:
            if combo.combo_id == combo_id:
                return combo
        return None


def _ranking_key(combo: ComboResult) -> tuple:
    return (-combo.coverage, combo.false_positive_rate, combo.detector_ids)


def run_counterfactual_assessment(
    log: EventLog,
    window: Sequence[LabeledPrompt],
    registry: RegistrySnapshot,
    max_combo_size: int,
    metrics_fn: Callable[[str], MetricVector],
    actor: str = "system",
    clock: Clock = utc_now,
    report_id: str | None = None,
) -> AssessmentReport:
    """Score every input-detector combination (up to max_combo_size) on a labeled window.

    A combination labels a prompt "attack" iff ANY member does (disjunction, the
    coverage-maximizing reading). The deployed subset is always reported, even
    when it is larger than max_combo_size. Emits A9 and A10.
    """
    labels = {p.label for p in window}
    if "attack" not in labels or "benign" not in labels:
        raise DataError("assessment window must contain at least one attack and one benign prompt")
    if max_combo_size < 1:
        raise DataError(f"max_combo_size must be >= 1, got {max_combo_size}")
    input_specs = sorted(registry.input_detectors(), key=lambda s: s.id)
    if not input_specs:
        raise DataError("registry has no input-stage detectors to assess")

    verdicts: dict[str, list[bool]] = {}
    for spec in input_specs:
        flags = []
        for prompt in window:
            score = score_detector(spec, metrics_fn(prompt.text), registry.version)
            flags.append(score.label == "attack")
        verdicts[spec.id] = flags
    log.record("A9", actor, payload_ref=report_id or "", registry_version=registry.version,
               note=f"detectors={len(input_specs)} window={len(window)}")

    is_attack = [p.label == "attack" for p in window]
    total_attacks = sum(is_attack)
    total_benign = len(window) - total_attacks

    id_sets = []
    for size in range(1, min(max_combo_size, len(input_specs)) + 1):
        id_sets.extend(combinations(sorted(verdicts), size))
    deployed_ids = registry.deployed_input_ids()
    deployed_combo_id = "+".join(deployed_ids) if deployed_ids else None
    if deployed_ids and deployed_ids not in id_sets:
        id_sets.append(deployed_ids)

    combos = []
    for ids in id_sets:
        flagged = [any(verdicts[d][i] for d in ids) for i in range(len(window))]
        caught = sum(1 for i, f in enumerate(flagged) if f and is_attack[i])
        false_pos = sum(1 for i, f in enumerate(flagged) if f and not is_attack[i])
        correct = caught + (total_benign - false_pos)
        combos.append(ComboResult(
            detector_ids=tuple(ids),
            coverage=caught / total_attacks,
            accuracy=correct / len(window),
            false_positive_rate=false_pos / total_benign,
        ))
    combos.sort(key=_ranking_key)

    report = AssessmentReport(
        id=report_id or f"asm-{clock().strftime('%Y%m%dT%H%M%S%f')}",
        window=tuple(f"{p.source or 'window'}#{i}" for i, p in enumerate(window)),
        combos=tuple(combos),
        deployed_combo_id=deployed_combo_id,
        recommendation=tuple(c.combo_id for c in combos),
        created_at=clock(),
        registry_version=registry.version,
    )
    log.record("A10", actor, payload_ref=report.id, registry_version=registry.version,
               note=f"combos={len(combos)} deployed={deployed_combo_id or '-'}")
    return report


def check_sustained_coverage(
    assessment_history: Sequence[AssessmentReport], threshold: float
) -> tuple[bool, list[float]]:
    """Trigger iff the most recent deployed coverage is strictly below the threshold.

    The deficit list carries the per-report shortfall (0.0 when at or above).
    """
    if not assessment_history:
        raise DataError("assessment history is empty")
    if not (0.0 < threshold < 1.0):
        raise ConfigurationError(f"coverage threshold must lie in (0,1), got {threshold}")
    deficits = [max(0.0, threshold - report.deployed_coverage()) for report in assessment_history]
    trigger = assessment_history[-1].deployed_coverage() < threshold
    return trigger, deficits


def assessment_to_dict(report: AssessmentReport) -> dict:
    return {
        "id": report.id,
        "created_at": report.created_at.isoformat(),
        "registry_version": report.registry_version,
        "window": list(report.window),
        "deployed_combo_id": report.deployed_combo_id,
        "combos": [
            {
                "detector_ids": list(c.detector_ids),
                "coverage": c.coverage,
                "accuracy": c.accuracy,
                "false_positive_rate": c.false_positive_rate,
            }
            for c in report.combos
        ],
        "recommendation": list(report.recommendation),
    }


def assessment_from_dict(record: dict) -> AssessmentReport:
    return AssessmentReport(
        id=record["id"],
        window=tuple(record["window"]),
        combos=tuple(
            ComboResult(
                detector_ids=tuple(c["detector_ids"]),
                coverage=c["coverage"],
                accuracy=c["accuracy"],
                false_positive_rate=c["false_positive_rate"],
            )
            for c in record["combos"]
        ),
        deployed_combo_id=record["deployed_combo_id"],
        recommendation=tuple(record["recommendation"]),
        created_at=datetime.fromisoformat(record["created_at"]),
        registry_version=int(record["registry_version"]),
    )


def anomaly_to_dict(record: AnomalyRecord) -> dict:
    return {
        "id": record.id,
        "prompt_ref": record.prompt_ref,
        "output_ref": record.output_ref,
        "trigger": list(record.trigger),
        "status": record.status,
        "created_at": record.created_at.isoformat(),
        "event_seqs": list(record.event_seqs),
        "incident_ref": record.incident_ref,
    }


def anomaly_from_dict(record: dict) -> AnomalyRecord:
    return AnomalyRecord(
        id=record["id"],
        prompt_ref=record["prompt_ref"],
        output_ref=record["output_ref"],
        trigger=tuple(record["trigger"]),
        status=record["status"],
        created_at=datetime.fromisoformat(record["created_at"]),
        event_seqs=tuple(record["event_seqs"]),
        incident_ref=record.get("incident_ref", ""),
    )


def incident_to_dict(record: IncidentRecord) -> dict:
    return {
        "id": record.id,
        "anomaly_ref": record.anomaly_ref,
        "severity": record.severity,
        "causal_link": record.causal_link,
        "notified": record.notified,
        "narrative": record.narrative,
        "created_at": record.created_at.isoformat(),
        "event_seqs": list(record.event_seqs),
    }


def incident_from_dict(record: dict) -> IncidentRecord:
    return IncidentRecord(
        id=record["id"],
        anomaly_ref=record["anomaly_ref"],
        severity=record["severity"],
        causal_link=record["causal_link"],
        notified=bool(record["notified"]),
        narrative=record["narrative"],
        created_at=datetime.fromisoformat(record["created_at"]),
        event_seqs=tuple(record["event_seqs"]),
    )
