"""Gateway orchestration: the per-request detection/decision pipeline and the
admin operations, every step recorded in the audit log.

Shared state is deliberately small: an immutable registry snapshot behind an
atomic pointer, the single-writer event log, and id-addressed record stores.
Request handlers read the snapshot pointer once and use that version for the
whole request, so a reconfiguration never mixes detector sets mid-flight.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime

from .assurance import DEFAULT_CONTEXT_KEY, ContextMapping
from .backends import LLMBackend
from .config import ServiceConfig
from .detectors import ClassificationBatch, load_labeled_corpus, run_batch
from .errors import (
    AuthorizationError,
    BackendError,
    ConfigurationError,
    DataError,
    StateError,
    ValidationError,
)
from .lifecycle import (
    AnomalyRecord,
    AssessmentReport,
    Clock,
    EventLog,
    IncidentRecord,
    RecordStore,
    RegistryDelta,
    RegistrySnapshot,
    anomaly_from_dict,
    anomaly_to_dict,
    apply_reconfiguration,
    assessment_from_dict,
    assessment_to_dict,
    check_sustained_coverage,
    flag_anomaly,
    incident_from_dict,
    incident_to_dict,
    notify_incident,
    pending_notification_obligations,
    promote_to_incident,
    run_counterfactual_assessment,
    snapshot_to_dict,
    utc_now,
)
from .metrics import compute_metrics
from .reporting import (
    generate_instructions,
    generate_technical_documentation,
    render_assessment,
    render_incident_report,
)
from .rules import Decision, evaluate_rules, severity

WARNING_TEXT = (
    "Your request was declined by the gateway's safety rules. "
    "See the instructions for use for what this system will and will not answer."
)
SUPPRESSED_TEXT = (
    "The model's response was withheld because it tripped an output safety check. "
    "The event has been recorded for review."
)
DISCLOSURE = "/v1/instructions"

ADMIN_READ_ROLES = ("aisdeveloper", "auditor")


@dataclass(frozen=True)
class ChatRequest:
    prompt: str
    context_key: str = DEFAULT_CONTEXT_KEY
    session_id: str = ""


@dataclass(frozen=True)
class ChatResponse:
    outcome: str  # "answer" | "warning"
    text: str
    decision_ref: str
    disclosure: str = DISCLOSURE


@dataclass
class RequestRecord:
    id: str
    session_id: str
    context_key: str
    prompt: str
    completion: str | None
    outcome: str
    registry_version: int
    input_metrics: dict
    input_scores: list
    input_decision: dict
    output_metrics: dict | None = None
    output_scores: list | None = None
    output_decision: dict | None = None
    anomaly_ref: str = ""
    created_at: datetime = field(default_factory=utc_now)


def _decision_dict(decision: Decision) -> dict:
    return {
        "verdict": decision.verdict,
        "fired_rules": list(decision.fired_rules),
        "bindings": decision.bindings,
        "registry_version": decision.registry_version,
    }


def _batch_dicts(batch: ClassificationBatch) -> list:
    return [
        {
            "detector_id": s.detector_id,
            "score": s.score,
            "label": s.label,
            "registry_version": s.registry_version,
        }
        for s in batch.scores
    ]


def request_record_to_dict(record: RequestRecord) -> dict:
    return {
        "id": record.id,
        "session_id": record.session_id,
        "context_key": record.context_key,
        "prompt": record.prompt,
        "completion": record.completion,
        "outcome": record.outcome,
        "registry_version": record.registry_version,
        "input_metrics": record.input_metrics,
        "input_scores": record.input_scores,
        "input_decision": record.input_decision,
        "output_metrics": record.output_metrics,
        "output_scores": record.output_scores,
        "output_decision": record.output_decision,
        "anomaly_ref": record.anomaly_ref,
        "created_at": record.created_at.isoformat(),
    }


class GatewayService:
    """Everything behind the HTTP surface, drivable in-process for tests and replay."""

    def __init__(self, config: ServiceConfig, clock: Clock = utc_now):
        self.config = config
        self.clock = clock
        self.backend: LLMBackend = config.backend
        state = config.state_dir
        self.log = EventLog(state / "events.log" if state else None, clock=clock)
        self.requests = RecordStore(state / "requests" if state else None,
                                    request_record_to_dict, None)
        self.anomalies = RecordStore(state / "anomalies" if state else None,
                                     anomaly_to_dict, anomaly_from_dict)
        self.incidents = RecordStore(state / "incidents" if state else None,
                                     incident_to_dict, incident_from_dict)
        self.assessments = RecordStore(state / "assessments" if state else None,
                                       assessment_to_dict, assessment_from_dict)
        self._snapshot = RegistrySnapshot(
            version=config.registry_version,
            detectors=tuple(config.detectors),
            rules=tuple(config.rules),
            effective_from=clock(),
        )
        self._published_versions = [self._snapshot.version]
        self._reconfig_lock = threading.Lock()
        self._request_counter = 0
        self._counter_lock = threading.Lock()
        self._prompts_since_assessment = 0
        self._background_jobs: list[threading.Thread] = []

    # --- shared helpers ---------------------------------------------------------

    @property
    def snapshot(self) -> RegistrySnapshot:
        return self._snapshot

    @property
    def published_versions(self) -> list[int]:
        return list(self._published_versions)

    def _next_request_id(self) -> str:
        with self._counter_lock:
            self._request_counter += 1
            return f"req-{self._request_counter:06d}"

    def _require_role(self, actor: str, allowed: tuple[str, ...], operation: str) -> None:
        if actor not in allowed:
            raise AuthorizationError(f"role {actor!r} may not {operation}")

    def _active_rules(self, snapshot: RegistrySnapshot, mapping: ContextMapping):
        return [r for r in snapshot.rules if r.id in mapping.active_rule_ids]

    def _context_variables(self, mapping: ContextMapping) -> dict:
        resolved = {}
        for name, source in mapping.variable_bindings.items():
            if source.startswith("literal:"):
                resolved[name] = source[len("literal:"):]
            elif source.startswith("config:"):
                key = source[len("config:"):]
                resolved[name] = {
                    "system_name": self.config.system_name,
                    "coverage_threshold": self.config.coverage_threshold,
                    "output_flag_mode": self.config.output_flag_mode,
                    "max_prompt_bytes": self.config.max_prompt_bytes,
                    "backend_identity": self.backend.identity,
                }.get(key, f"<unknown config key {key}>")
            else:
                resolved[name] = f"<unresolvable source {source}>"
        return resolved

    # --- primary cycle ------------------------------------------------------------

    def handle_chat(self, request: ChatRequest) -> ChatResponse:
        """A1..A6 pipeline; blocks before generation, screens after it."""
        if len(request.prompt.encode("utf-8")) > self.config.max_prompt_bytes:
            raise ValidationError(
                f"prompt exceeds the configured maximum of {self.config.max_prompt_bytes} bytes"
            )
        snapshot = self._snapshot  # one atomic read; the whole request uses this version
        version = snapshot.version
        request_id = self._next_request_id()
        mapping = self.config.mappings.resolve(request.context_key or DEFAULT_CONTEXT_KEY)
        active_rules = self._active_rules(snapshot, mapping)

        self.log.record("A1", "user", payload_ref=request_id, registry_version=version,
                        note=f"session={request.session_id or '-'} context={mapping.context_key}")
        m = compute_metrics(self.config.model, request.prompt)
        self.log.record("A2", "system", payload_ref=request_id, registry_version=version,
                        note=f"pp={m.pp:.4f} cl={m.cl} cs={m.cs}")

        batch = run_batch(snapshot.detectors, m, "input", "deployed", version, text_ref=request_id)
        self.log.record("A3", "system", payload_ref=request_id, registry_version=version,
                        note=" ".join(f"{s.detector_id}={s.score:.4f}" for s in batch.scores) or "no-deployed-detectors")

        env = {"pp": m.pp, "cl": float(m.cl), "cs": float(m.cs)}
        env.update({f"score({s.detector_id})": s.score for s in batch.scores})
        decision = evaluate_rules(active_rules, env, "input", version)
        self.log.record("A4", "system", payload_ref=request_id, registry_version=version,
                        note=f"verdict={decision.verdict} fired={','.join(decision.fired_rules) or '-'}")

        record = RequestRecord(
            id=request_id,
            session_id=request.session_id,
            context_key=mapping.context_key,
            prompt=request.prompt,
            completion=None,
            outcome="warning",
            registry_version=version,
            input_metrics=m.as_dict(),
            input_scores=_batch_dicts(batch),
            input_decision=_decision_dict(decision),
            created_at=self.clock(),
        )

        if decision.severity() >= severity("BLOCK"):
            anomaly = flag_anomaly(self.log, self.anomalies, decision, request_id,
                                   output_ref="", clock=self.clock)
            record.anomaly_ref = anomaly.id
            self.log.record("A6", "system", payload_ref=request_id, registry_version=version,
                            note="outcome=warning")
            self.requests.put(request_id, record)
            return ChatResponse("warning", WARNING_TEXT, request_id)

        if decision.severity() >= severity("FLAG_ANOMALY"):
            anomaly = flag_anomaly(self.log, self.anomalies, decision, request_id,
                                   output_ref="", clock=self.clock)
            record.anomaly_ref = anomaly.id

        try:
            completion = self.backend.complete(request.prompt)
        except BackendError:
            self.log.record("A6", "system", payload_ref=request_id, registry_version=version,
                            note="outcome=backend_unavailable")
            record.outcome = "backend_unavailable"
            self.requests.put(request_id, record)
            raise
        self.log.record("A5", "system", payload_ref=request_id, registry_version=version,
                        note=f"backend={self.backend.identity}")

        output_ref = f"{request_id}#out"
        out_metrics = compute_metrics(self.config.model, completion)
        out_batch = run_batch(snapshot.detectors, out_metrics, "output", "deployed", version,
                              text_ref=output_ref, text=completion)
        out_env = {"pp": out_metrics.pp, "cl": float(out_metrics.cl), "cs": float(out_metrics.cs)}
        out_env.update({f"score({s.detector_id})": s.score for s in out_batch.scores})
        out_decision = evaluate_rules(active_rules, out_env, "output", version)

        record.completion = completion
        record.output_metrics = out_metrics.as_dict()
        record.output_scores = _batch_dicts(out_batch)
        record.output_decision = _decision_dict(out_decision)

        suppressed = False
        if out_decision.severity() >= severity("FLAG_ANOMALY"):
            anomaly = flag_anomaly(self.log, self.anomalies, out_decision, request_id,
                                   output_ref=output_ref, clock=self.clock)
            record.anomaly_ref = anomaly.id
            if out_decision.severity() >= severity("BLOCK"):
                suppressed = True  # output BLOCK always withholds, regardless of mode
            else:
                suppressed = self.config.output_flag_mode == "suppress"

        outcome = "warning" if suppressed else "answer"
        record.outcome = outcome
        self.log.record("A6", "system", payload_ref=request_id, registry_version=version,
                        note=f"outcome={outcome}")
        self.requests.put(request_id, record)
        self._maybe_trigger_assessment(decision)
        if suppressed:
            return ChatResponse("warning", SUPPRESSED_TEXT, request_id)
        return ChatResponse("answer", completion, request_id)

    def _maybe_trigger_assessment(self, decision: Decision) -> None:
        cfg = self.config.assessment
        fired_trigger = decision.verdict == "TRIGGER_ASSESSMENT"
        due = False
        if cfg.every_n_prompts > 0:
            with self._counter_lock:
                self._prompts_since_assessment += 1
                if self._prompts_since_assessment >= cfg.every_n_prompts:
                    self._prompts_since_assessment = 0
                    due = True
        if (due or fired_trigger) and cfg.window_path is not None:
            thread = threading.Thread(
                target=self._run_assessment_guarded, args=("system",), daemon=True
            )
            self._background_jobs.append(thread)
            thread.start()

    def _run_assessment_guarded(self, actor: str) -> None:
        try:
            self.run_assessment(actor)
        except Exception:  # background job; failures surface via missing reports
            pass

    def drain_background_jobs(self, timeout: float = 10.0) -> None:
        """Wait for in-flight assessment jobs (shutdown and tests)."""
        for thread in self._background_jobs:
            thread.join(timeout=timeout)
        self._background_jobs = [t for t in self._background_jobs if t.is_alive()]

    # --- public information ---------------------------------------------------------

    def instructions(self, actor: str = "user") -> dict:
        """A0: the instructions-for-use factsheet."""
        mapping = self.config.mappings.resolve(DEFAULT_CONTEXT_KEY)
        doc = generate_instructions(
            self._snapshot, self.config.cases, self.config.system_name, self.clock(),
            context_variables=self._context_variables(mapping),
        )
        self.log.record("A0", actor if actor in ("user", *ADMIN_READ_ROLES) else "user",
                        payload_ref=doc["doc_id"], registry_version=self._snapshot.version)
        return doc

    # --- admin surface ----------------------------------------------------------------

    def get_detectors(self, actor: str) -> dict:
        """A7: metrics and thresholds of the configured detectors."""
        self._require_role(actor, ADMIN_READ_ROLES, "read detector configuration")
        snapshot = self._snapshot
        self.log.record("A7", actor, payload_ref=f"registry-v{snapshot.version}",
                        registry_version=snapshot.version)
        return snapshot_to_dict(snapshot)

    def get_documentation(self, actor: str) -> dict:
        """A8: full technical documentation."""
        self._require_role(actor, ADMIN_READ_ROLES, "read technical documentation")
        snapshot = self._snapshot
        mapping = self.config.mappings.resolve(DEFAULT_CONTEXT_KEY)
        doc = generate_technical_documentation(
            snapshot,
            self.config.cases,
            self.assessments.all(),
            self.log.action_counts(),
            self.config.requirements,
            self.config.system_name,
            self.clock(),
            context_variables=self._context_variables(mapping),
        )
        self.log.record("A8", actor, payload_ref=doc["doc_id"], registry_version=snapshot.version)
        return doc

    def run_assessment(
        self,
        actor: str,
        window_path=None,
        max_combo_size: int | None = None,
    ) -> AssessmentReport:
        """A9+A10: counterfactual assessment over the configured labeled window."""
        if actor != "system":
            self._require_role(actor, ("aisdeveloper",), "trigger assessments")
        path = window_path or self.config.assessment.window_path
        if path is None:
            raise DataError("no assessment window configured and none supplied")
        window = load_labeled_corpus(path)
        snapshot = self._snapshot
        report_id = f"asm-{len(self.assessments) + 1:06d}"
        report = run_counterfactual_assessment(
            self.log,
            window,
            snapshot,
            max_combo_size or self.config.assessment.max_combo_size,
            lambda text: compute_metrics(self.config.model, text),
            actor=actor,
            clock=self.clock,
            report_id=report_id,
        )
        self.assessments.put(report.id, report)
        return report

    def get_assessment(self, actor: str, assessment_id: str) -> dict:
        """A11: rendered assessment document."""
        self._require_role(actor, ADMIN_READ_ROLES, "read assessments")
        report = self.assessments.get(assessment_id)
        if report is None:
            raise KeyError(assessment_id)
        doc = render_assessment(report)
        trigger, deficits = check_sustained_coverage([report], self.config.coverage_threshold)
        doc["coverage_threshold"] = self.config.coverage_threshold
        doc["sustained_coverage_trigger"] = trigger
        doc["coverage_deficit"] = deficits[-1]
        self.log.record("A11", actor, payload_ref=assessment_id,
                        registry_version=report.registry_version)
        return doc

    def coverage_status(self, actor: str) -> dict:
        """R7 standing: deployed coverage across all stored assessments."""
        self._require_role(actor, ADMIN_READ_ROLES, "read coverage status")
        history = self.assessments.all()
        if not history:
            return {"status": "no assessments yet", "trigger": False, "deficits": []}
        trigger, deficits = check_sustained_coverage(history, self.config.coverage_threshold)
        return {
            "status": "ok" if not trigger else "coverage below threshold",
            "threshold": self.config.coverage_threshold,
            "trigger": trigger,
            "deficits": deficits,
            "latest_assessment": history[-1].id,
        }

    def reconfigure(self, actor: str, delta: RegistryDelta) -> RegistrySnapshot:
        """A12: atomic registry version bump."""
        with self._reconfig_lock:
            new_snapshot = apply_reconfiguration(self.log, self._snapshot, delta, actor,
                                                 clock=self.clock)
            self._snapshot = new_snapshot
            self._published_versions.append(new_snapshot.version)
        return new_snapshot

    def list_anomalies(self, actor: str) -> list[AnomalyRecord]:
        """A14: anomaly data for the developer."""
        self._require_role(actor, ("aisdeveloper",), "list anomalies")
        self.log.record("A14", actor, registry_version=self._snapshot.version,
                        note=f"count={len(self.anomalies)}")
        return self.anomalies.all()

    def get_anomaly(self, actor: str, anomaly_id: str) -> AnomalyRecord:
        """A15: one anomaly in detail."""
        self._require_role(actor, ("aisdeveloper",), "inspect anomalies")
        record = self.anomalies.get(anomaly_id)
        if record is None:
            raise KeyError(anomaly_id)
        self.log.record("A15", actor, payload_ref=anomaly_id,
                        registry_version=self._snapshot.version)
        return record

    def promote_anomaly(
        self, actor: str, anomaly_id: str, incident_severity: str,
        causal_link: str, narrative: str,
    ) -> IncidentRecord:
        """A17: escalate an anomaly to an incident."""
        self._require_role(actor, ("aisdeveloper",), "promote anomalies")
        anomaly = self.anomalies.get(anomaly_id)
        if anomaly is None:
            raise KeyError(anomaly_id)
        return promote_to_incident(
            self.log, self.anomalies, self.incidents, anomaly,
            incident_severity, causal_link, narrative,
            actor=actor, clock=self.clock, registry_version=self._snapshot.version,
        )

    def list_incidents(self, actor: str) -> dict:
        """A18: incident inventory plus outstanding notification obligations."""
        self._require_role(actor, ADMIN_READ_ROLES, "list incidents")
        incidents = self.incidents.all()
        pending = pending_notification_obligations(self.incidents)
        self.log.record("A18", actor, registry_version=self._snapshot.version,
                        note=f"count={len(incidents)} pending={len(pending)}")
        return {
            "incidents": [incident_to_dict(i) for i in incidents],
            "pending_notification": [i.id for i in pending],
        }

    def notify(self, actor: str, incident_id: str) -> IncidentRecord:
        """A18: mark the supervising stakeholder as notified."""
        self._require_role(actor, ADMIN_READ_ROLES, "notify incidents")
        incident = self.incidents.get(incident_id)
        if incident is None:
            raise KeyError(incident_id)
        return notify_incident(self.log, self.incidents, incident, actor,
                               registry_version=self._snapshot.version)

    def incident_report(self, actor: str, incident_id: str) -> dict:
        self._require_role(actor, ADMIN_READ_ROLES, "read incident reports")
        incident = self.incidents.get(incident_id)
        if incident is None:
            raise KeyError(incident_id)
        anomaly = self.anomalies.get(incident.anomaly_ref)
        if anomaly is None:
            raise StateError(f"incident {incident_id} references missing anomaly {incident.anomaly_ref}")
        request = self.requests.get(anomaly.prompt_ref)
        request_dict = request_record_to_dict(request) if request else None
        return render_incident_report(incident, anomaly, self.log, request_dict)

    def record_llm_adjustment(self, actor: str, description: str) -> int:
        """A16: free-text record of an out-of-band model adjustment."""
        self._require_role(actor, ("llmdeveloper",), "record LLM adjustments")
        event = self.log.record("A16", actor, registry_version=self._snapshot.version,
                                note=description)
        return event.seq

    def events_from(self, actor: str, from_seq: int = 1, to_seq: int | None = None) -> list:
        """Audit-trail export; reading the log does not itself append to it."""
        self._require_role(actor, ("auditor",), "export the event log")
        return self.log.events(from_seq, to_seq)

    def resolve_context(self, context_key: str) -> ContextMapping:
        return self.config.mappings.resolve(context_key)
