"""Service configuration: one structured JSON file, fully validated before the
gateway binds its listener. Any defect aborts startup with the complete list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import metrics
from .assurance import (
    AssuranceCase,
    ContextMappingSet,
    Requirement,
    load_cases_file,
    load_mappings_file,
    load_requirement_registry,
    validate_case,
)
from .backends import LLMBackend, MockBackend, RemoteBackend
from .detectors import DetectorSpec, load_registry_file
from .errors import ConfigurationError, ParseError
from .lifecycle import validate_registry
from .rules import Rule, parse_rules

DEFAULT_MAX_PROMPT_BYTES = 32 * 1024
OUTPUT_FLAG_MODES = ("suppress", "deliver")


@dataclass
class AssessmentConfig:
    every_n_prompts: int = 100
    window_path: Path | None = None
    max_combo_size: int = 3


@dataclass
class ServiceConfig:
    system_name: str
    host: str
    port: int
    backend: LLMBackend
    registry_version: int
    detectors: list[DetectorSpec]
    rules: list[Rule]
    cases: list[AssuranceCase]
    mappings: ContextMappingSet
    requirements: list[Requirement]
    model: metrics.NGramModel
    state_dir: Path | None
    tokens: dict[str, str]
    max_prompt_bytes: int
    output_flag_mode: str
    coverage_threshold: float
    assessment: AssessmentConfig
    source_path: Path | None = None
    raw: dict = field(default_factory=dict)


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else (base / path)


def load_config(path: str | Path) -> ServiceConfig:
    """Parse and cross-validate the whole configuration; collects all defects."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    base = path.parent
    defects: list[str] = []

    system_name = raw.get("system_name", "promptgate")
    listen = raw.get("listen", {})
    host = listen.get("host", "127.0.0.1")
    port = int(listen.get("port", 8080))

    backend_cfg = raw.get("backend", {"kind": "mock"})
    backend: LLMBackend
    if backend_cfg.get("kind") == "mock":
        backend = MockBackend()
    elif backend_cfg.get("kind") == "remote":
        url = backend_cfg.get("url")
        if not url:
            defects.append("backend.kind is 'remote' but backend.url is missing")
            backend = MockBackend()
        else:
            backend = RemoteBackend(url=url, timeout_s=float(backend_cfg.get("timeout_s", 30.0)))
    else:
        defects.append(f"backend.kind must be 'mock' or 'remote', got {backend_cfg.get('kind')!r}")
        backend = MockBackend()

    model = None
    lm_cfg = raw.get("language_model", {})
    try:
        if "path" in lm_cfg:
            model = metrics.load_model(_resolve(base, lm_cfg["path"]))
        elif "corpus_path" in lm_cfg:
            corpus_path = _resolve(base, lm_cfg["corpus_path"])
            if not corpus_path.exists():
                defects.append(f"language_model.corpus_path does not exist: {corpus_path}")
            else:
                corpus = [
                    line for line in corpus_path.read_text(encoding="utf-8").splitlines() if line
                ]
                model = metrics.train_ngram(
                    corpus,
                    order=int(lm_cfg.get("order", 2)),
                    smoothing=float(lm_cfg.get("smoothing", 1.0)),
                )
        else:
            defects.append("language_model needs either a 'path' or a 'corpus_path'")
    except ConfigurationError as exc:
        defects.append(f"language_model: {exc}")

    registry_version = 1
    detectors: list[DetectorSpec] = []
    if "registry_path" not in raw:
        defects.append("registry_path is missing")
    else:
        try:
            registry_version, detectors = load_registry_file(_resolve(base, raw["registry_path"]))
        except ConfigurationError as exc:
            defects.append(str(exc))

    rules: list[Rule] = []
    if "rules_path" not in raw:
        defects.append("rules_path is missing")
    else:
        rules_path = _resolve(base, raw["rules_path"])
        if not rules_path.exists():
            defects.append(f"rules_path does not exist: {rules_path}")
        else:
            try:
                rules = parse_rules(rules_path.read_text(encoding="utf-8"))
            except ParseError as exc:
                defects.append(f"rules file {rules_path}: {exc}")

    defects.extend(validate_registry(detectors, rules))

    cases: list[AssuranceCase] = []
    if "cases_path" in raw:
        try:
            cases = load_cases_file(_resolve(base, raw["cases_path"]))
            for case in cases:
                for defect in validate_case(case):
                    defects.append(f"assurance case defect ({defect.code}): {defect.detail}")
        except ConfigurationError as exc:
            defects.append(str(exc))

    mappings = None
    if "mappings_path" not in raw:
        defects.append("mappings_path is missing")
    else:
        try:
            mappings = load_mappings_file(_resolve(base, raw["mappings_path"]))
            defects.extend(
                mappings.validate_references({r.id for r in rules}, {c.id for c in cases})
            )
        except ConfigurationError as exc:
            defects.append(str(exc))

    tokens = dict(raw.get("tokens", {}))
    for role in tokens:
        if role not in ("user", "aisdeveloper", "llmdeveloper", "auditor"):
            defects.append(f"tokens: unknown role {role!r}")

    output_flag_mode = raw.get("output_flag_mode", "suppress")
    if output_flag_mode not in OUTPUT_FLAG_MODES:
        defects.append(f"output_flag_mode must be one of {OUTPUT_FLAG_MODES}, got {output_flag_mode!r}")

    coverage_threshold = float(raw.get("coverage_threshold", 0.9))
    if not (0.0 < coverage_threshold < 1.0):
        defects.append(f"coverage_threshold must lie in (0,1), got {coverage_threshold}")

    assess_cfg = raw.get("assessment", {})
    window_path = None
    if assess_cfg.get("window_path"):
        window_path = _resolve(base, assess_cfg["window_path"])
        if not window_path.exists():
            defects.append(f"assessment.window_path does not exist: {window_path}")
    assessment = AssessmentConfig(
        every_n_prompts=int(assess_cfg.get("every_n_prompts", 100)),
        window_path=window_path,
        max_combo_size=int(assess_cfg.get("max_combo_size", 3)),
    )
    if assessment.every_n_prompts < 0:
        defects.append("assessment.every_n_prompts must be >= 0 (0 disables the trigger)")
    if assessment.max_combo_size < 1:
        defects.append("assessment.max_combo_size must be >= 1")

    state_dir = _resolve(base, raw["state_dir"]) if raw.get("state_dir") else None

    if defects:
        raise ConfigurationError(f"invalid configuration {path}", sorted(set(defects)))

    return ServiceConfig(
        system_name=system_name,
        host=host,
        port=port,
        backend=backend,
        registry_version=registry_version,
        detectors=detectors,
        rules=rules,
        cases=cases,
        mappings=mappings,
        requirements=load_requirement_registry(),
        model=model,
        state_dir=state_dir,
        tokens=tokens,
        max_prompt_bytes=int(raw.get("max_prompt_bytes", DEFAULT_MAX_PROMPT_BYTES)),
        output_flag_mode=output_flag_mode,
        coverage_threshold=coverage_threshold,
        assessment=assessment,
        source_path=path,
        raw=raw,
    )
