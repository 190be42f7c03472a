"""Scripted cycle replay: drive an in-process gateway and assert that the audit
log records exactly the expected action-id sequence per step.

Replay is a first-class verification tool, not only a test fixture: an auditor
can re-check cycle conformance of a deployed configuration at any time.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi.testclient import TestClient

from .api import create_app
from .backends import MockBackend
from .config import load_config
from .errors import ConfigurationError, ValidationError
from .lifecycle import ACTION_IDS
from .service import GatewayService

_VAR_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class ReplayStep:
    name: str
    kind: str  # "chat" | "admin"
    method: str = "GET"
    path: str = ""
    body: dict = field(default_factory=dict)
    role: str = ""
    expect_actions: tuple[str, ...] = ()
    expect_status: int = 200
    expect_outcome: str = ""
    capture: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StepResult:
    name: str
    passed: bool
    expected: tuple[str, ...]
    actual: tuple[str, ...]
    detail: str = ""


def load_script(path: str | Path) -> list[ReplayStep]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        steps = [
            ReplayStep(
                name=s.get("name", f"step-{i + 1}"),
                kind=s["kind"],
                method=s.get("method", "GET").upper(),
                path=s.get("path", ""),
                body=s.get("body", {}),
                role=s.get("role", ""),
                expect_actions=tuple(s.get("expect_actions", [])),
                expect_status=int(s.get("expect_status", 200)),
                expect_outcome=s.get("expect_outcome", ""),
                capture=s.get("capture", {}),
            )
            for i, s in enumerate(payload["steps"])
        ]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed replay script {path}: {exc}") from exc
    for step in steps:
        unknown = [a for a in step.expect_actions if a not in ACTION_IDS]
        if unknown:
            raise ValidationError(f"step {step.name!r} expects unknown action ids {unknown}")
        if step.kind not in ("chat", "admin"):
            raise ValidationError(f"step {step.name!r} has unknown kind {step.kind!r}")
    return steps


def _substitute(template: str, variables: dict) -> str:
    def repl(match: re.Match) -> str:
        name = match.group(1)
        if name not in variables:
            raise ValidationError(f"replay variable {name!r} was never captured")
        return str(variables[name])

    return _VAR_RE.sub(repl, template)


def _walk(payload: Any, dotted: str) -> Any:
    current = payload
    for part in dotted.split("."):
        if isinstance(current, list):
            current = current[int(part)]
        else:
            current = current[part]
    return current


def run_script(config_path: str | Path, script_path: str | Path) -> list[StepResult]:
    """Run every step against a fresh in-process gateway with the mock backend."""
    steps = load_script(script_path)
    config = load_config(config_path)
    config.backend = MockBackend()  # replay always uses the deterministic mock
    service = GatewayService(config)
    client = TestClient(create_app(service), raise_server_exceptions=False)
    role_tokens = {role: token for role, token in config.tokens.items() if token}

    variables: dict[str, Any] = {}
    results = []
    for step in steps:
        seq_before = len(service.log)
        try:
            if step.kind == "chat":
                body = {k: _substitute(v, variables) if isinstance(v, str) else v
                        for k, v in step.body.items()}
                headers = {}
                if step.role and step.role in role_tokens:
                    headers["Authorization"] = f"Bearer {role_tokens[step.role]}"
                response = client.post("/v1/chat", json=body, headers=headers)
            else:
                path = _substitute(step.path, variables)
                headers = {}
                if step.role:
                    token = role_tokens.get(step.role)
                    if token is None:
                        raise ConfigurationError(
                            f"step {step.name!r} needs a token for role {step.role!r} in the config"
                        )
                    headers["Authorization"] = f"Bearer {token}"
                body = None
                if step.method in ("POST", "PUT", "PATCH"):
                    body = json.loads(_substitute(json.dumps(step.body), variables))
                response = client.request(step.method, path, json=body, headers=headers)
        except ValidationError as exc:
            # A missing capture from an earlier failed step; report, don't crash.
            actual = tuple(e.action_id for e in service.log.events(from_seq=seq_before + 1))
            results.append(StepResult(step.name, False, step.expect_actions, actual, str(exc)))
            continue

        actual = tuple(e.action_id for e in service.log.events(from_seq=seq_before + 1))
        detail = ""
        passed = True
        if response.status_code != step.expect_status:
            passed = False
            detail = f"status {response.status_code} != {step.expect_status}: {response.text[:200]}"
        try:
            payload = response.json() if response.content else {}
        except ValueError:
            payload = {}
        if passed and step.expect_outcome and payload.get("outcome") != step.expect_outcome:
            passed = False
            detail = f"outcome {payload.get('outcome')!r} != {step.expect_outcome!r}"
        if passed and actual != step.expect_actions:
            passed = False
            detail = "action sequence mismatch"
        if passed:
            for var, dotted in step.capture.items():
                try:
                    variables[var] = _walk(payload, dotted)
                except (KeyError, IndexError, TypeError, ValueError):
                    passed = False
                    detail = f"capture {var!r}: path {dotted!r} not found in response"
                    break
        results.append(StepResult(step.name, passed, step.expect_actions, actual, detail))
    return results


def format_results(results: list[StepResult]) -> str:
    lines = []
    for result in results:
        mark = "PASS" if result.passed else "FAIL"
        lines.append(f"[{mark}] {result.name}")
        if not result.passed:
            lines.append(f"       expected: {list(result.expected)}")
            lines.append(f"       actual:   {list(result.actual)}")
            if result.detail:
                lines.append(f"       {result.detail}")
    total = len(results)
    passed = sum(1 for r in results if r.passed)
    lines.append(f"{passed}/{total} steps passed")
    return "\n".join(lines)
