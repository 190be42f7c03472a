"""HTTP surface over GatewayService. Role resolution is static bearer tokens
from the config; the service layer enforces per-operation authorization.
"""

from __future__ import annotations

from fastapi import Depends, FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .detectors import spec_from_dict
from .errors import (
    AuthorizationError,
    BackendError,
    ConfigurationError,
    DataError,
    ParseError,
    StateError,
    ValidationError,
)
from .lifecycle import RegistryDelta, anomaly_to_dict, incident_to_dict
from .service import ChatRequest, GatewayService


class ChatBody(BaseModel):
    prompt: str
    context_key: str = "default"
    session_id: str = ""


class AssessBody(BaseModel):
    window_path: str | None = None
    max_combo_size: int | None = None


class RegistryPutBody(BaseModel):
    upsert_detectors: list[dict] = Field(default_factory=list)
    remove_detector_ids: list[str] = Field(default_factory=list)
    upsert_rules: list[str] = Field(default_factory=list)
    remove_rule_ids: list[str] = Field(default_factory=list)
    note: str = ""


class PromoteBody(BaseModel):
    severity: str
    causal_link: str
    narrative: str = ""


class AdjustmentBody(BaseModel):
    description: str


def _event_dict(event) -> dict:
    return {
        "seq": event.seq,
        "action_id": event.action_id,
        "actor": event.actor,
        "timestamp": event.timestamp.isoformat(),
        "payload_ref": event.payload_ref,
        "registry_version": event.registry_version,
        "note": event.note,
    }


def create_app(service: GatewayService) -> FastAPI:
    app = FastAPI(title=service.config.system_name, docs_url=None, redoc_url=None)
    tokens = {token: role for role, token in service.config.tokens.items() if token}

    def resolve_role(authorization: str | None = Header(default=None)) -> str:
        """Role of the caller; empty string when anonymous or the token is unknown."""
        if not authorization:
            return ""
        token = authorization.removeprefix("Bearer ").strip()
        return tokens.get(token, "")

    @app.exception_handler(AuthorizationError)
    async def _auth_handler(_: Request, exc: AuthorizationError):
        return JSONResponse(status_code=403, content={"error": str(exc)})

    @app.exception_handler(KeyError)
    async def _missing_handler(_: Request, exc: KeyError):
        return JSONResponse(status_code=404, content={"error": f"unknown resource {exc}"})

    @app.exception_handler(StateError)
    async def _state_handler(_: Request, exc: StateError):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.exception_handler(BackendError)
    async def _backend_handler(_: Request, exc: BackendError):
        return JSONResponse(status_code=503, content={"error": str(exc), "outcome": "unavailable"})

    for client_error in (ValidationError, DataError, ConfigurationError, ParseError):
        @app.exception_handler(client_error)
        async def _client_handler(_: Request, exc: Exception):
            defects = getattr(exc, "defects", [])
            return JSONResponse(status_code=400, content={"error": str(exc), "defects": defects})

    @app.post("/v1/chat")
    def chat(body: ChatBody, role: str = Depends(resolve_role)):
        if service.config.tokens.get("user") and role != "user":
            # With a configured user token, only that token may chat; admin
            # tokens belong on the admin surface.
            raise AuthorizationError("chat requires the user role token")
        response = service.handle_chat(
            ChatRequest(prompt=body.prompt, context_key=body.context_key, session_id=body.session_id)
        )
        return {
            "outcome": response.outcome,
            "text": response.text,
            "decision_ref": response.decision_ref,
            "disclosure": response.disclosure,
        }

    @app.get("/v1/instructions")
    def instructions(role: str = Depends(resolve_role)):
        return service.instructions(role or "user")

    @app.get("/admin/detectors")
    def admin_detectors(role: str = Depends(resolve_role)):
        return service.get_detectors(role)

    @app.get("/admin/documentation")
    def admin_documentation(role: str = Depends(resolve_role)):
        return service.get_documentation(role)

    @app.post("/admin/assessments")
    def admin_run_assessment(body: AssessBody | None = None, role: str = Depends(resolve_role)):
        body = body or AssessBody()
        report = service.run_assessment(role, body.window_path, body.max_combo_size)
        return {"assessment_id": report.id, "registry_version": report.registry_version}

    @app.get("/admin/assessments/{assessment_id}")
    def admin_get_assessment(assessment_id: str, role: str = Depends(resolve_role)):
        return service.get_assessment(role, assessment_id)

    @app.get("/admin/coverage")
    def admin_coverage(role: str = Depends(resolve_role)):
        return service.coverage_status(role)

    @app.put("/admin/registry")
    def admin_reconfigure(body: RegistryPutBody, role: str = Depends(resolve_role)):
        delta = RegistryDelta(
            upsert_detectors=tuple(spec_from_dict(rec) for rec in body.upsert_detectors),
            remove_detector_ids=tuple(body.remove_detector_ids),
            upsert_rules=tuple(body.upsert_rules),
            remove_rule_ids=tuple(body.remove_rule_ids),
            note=body.note,
        )
        snapshot = service.reconfigure(role, delta)
        return {"registry_version": snapshot.version, "detector_count": len(snapshot.detectors),
                "rule_count": len(snapshot.rules)}

    @app.get("/admin/anomalies")
    def admin_anomalies(role: str = Depends(resolve_role)):
        return {"anomalies": [anomaly_to_dict(a) for a in service.list_anomalies(role)]}

    @app.get("/admin/anomalies/{anomaly_id}")
    def admin_anomaly(anomaly_id: str, role: str = Depends(resolve_role)):
        return anomaly_to_dict(service.get_anomaly(role, anomaly_id))

    @app.post("/admin/anomalies/{anomaly_id}/promote")
    def admin_promote(anomaly_id: str, body: PromoteBody, role: str = Depends(resolve_role)):
        incident = service.promote_anomaly(role, anomaly_id, body.severity,
                                           body.causal_link, body.narrative)
        return incident_to_dict(incident)

    @app.get("/admin/incidents")
    def admin_incidents(role: str = Depends(resolve_role)):
        return service.list_incidents(role)

    @app.get("/admin/incidents/{incident_id}/report")
    def admin_incident_report(incident_id: str, role: str = Depends(resolve_role)):
        return service.incident_report(role, incident_id)

    @app.post("/admin/incidents/{incident_id}/notify")
    def admin_notify(incident_id: str, role: str = Depends(resolve_role)):
        return incident_to_dict(service.notify(role, incident_id))

    @app.post("/admin/llm-adjustments")
    def admin_adjustment(body: AdjustmentBody, role: str = Depends(resolve_role)):
        seq = service.record_llm_adjustment(role, body.description)
        return {"seq": seq}

    @app.get("/admin/events")
    def admin_events(
        from_seq: int = Query(default=1, ge=1),
        to_seq: int | None = Query(default=None),
        role: str = Depends(resolve_role),
    ):
        events = service.events_from(role, from_seq, to_seq)
        return {"events": [_event_dict(e) for e in events]}

    return app
