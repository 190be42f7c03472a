"""Operator command line: serve the gateway, train detectors, run offline
assessments, generate reports (figures included), export audit bundles, and
replay scripted cycles.

Exit codes are a stable contract: 0 success, 1 assertion/replay failure,
2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
import tarfile
from datetime import datetime, timezone
from pathlib import Path

from . import figures, metrics
from .config import load_config
from .detectors import (
    DetectorSpec,
    TrainingConfig,
    load_labeled_corpus,
    load_registry_file,
    save_registry_file,
    train_logistic,
    validate_spec,
)
from .errors import ConfigurationError, DataError, ParseError, PromptGateError, TrainingError
from .lifecycle import EventLog, RegistrySnapshot, run_counterfactual_assessment, snapshot_to_dict
from .reporting import (
    assessment_table_delimited,
    generate_instructions,
    generate_technical_documentation,
    render_assessment,
    render_incident_report,
    serialize_document,
)
from .service import GatewayService

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3


def _load_or_train_model(args) -> metrics.NGramModel:
    if getattr(args, "model", None):
        return metrics.load_model(args.model)
    if getattr(args, "lm_corpus", None):
        corpus = [line for line in Path(args.lm_corpus).read_text(encoding="utf-8").splitlines() if line]
        return metrics.train_ngram(corpus, order=args.order, smoothing=args.smoothing)
    raise ConfigurationError("either --model or --lm-corpus is required")


CONFIG_ENV_VAR = "PROMPTGATE_CONFIG"


def _config_path(args) -> str:
    import os

    path = args.config or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        raise ConfigurationError(
            f"no config file given: pass --config or set {CONFIG_ENV_VAR}")
    return path


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    config = load_config(_config_path(args))
    service = GatewayService(config)
    app = create_app(service)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    finally:
        service.drain_background_jobs()
        service.log.close()
    return EXIT_OK


def cmd_train(args) -> int:
    corpus = load_labeled_corpus(args.corpus)
    model = _load_or_train_model(args)
    feature_sets = [tuple(f.strip() for f in spec.split(",")) for spec in args.features]
    config = TrainingConfig(learning_rate=args.lr, epochs=args.epochs, l2=args.l2)
    requirement_links = frozenset(args.req.split(","))

    specs = []
    for features in feature_sets:
        vectors = []
        for prompt in corpus:
            m = metrics.compute_metrics(model, prompt.text)
            vectors.append(([m.get(f) for f in features], prompt.label))
        fit = train_logistic(vectors, config)
        report = {k: v for k, v in fit.report.items() if k != "loss_history"}
        spec = DetectorSpec(
            id=f"logit_{'_'.join(features)}",
            kind="logistic",
            stage="input",
            features=list(features),
            params={
                "weights": list(fit.weights),
                "bias": fit.bias,
                "mean": list(fit.mean),
                "std": list(fit.std),
                "cutoff": args.cutoff,
                "training_report": report,
            },
            status=args.status,
            requirement_links=requirement_links,
            purpose=f"logistic regression over ({', '.join(features)})",
        )
        defects = validate_spec(spec)
        if defects:
            raise ConfigurationError("trained spec failed validation", defects)
        specs.append(spec)
        print(f"trained {spec.id}: accuracy={report['training_accuracy']:.4f} "
              f"final_loss={report['final_loss']:.6f}")
    save_registry_file(1, specs, args.out)
    print(f"wrote {len(specs)} detector spec(s) to {args.out}")
    return EXIT_OK


def cmd_assess(args) -> int:
    window = load_labeled_corpus(args.window)
    version, detectors = load_registry_file(args.registry)
    model = _load_or_train_model(args)
    snapshot = RegistrySnapshot(
        version=version,
        detectors=tuple(detectors),
        rules=(),
        effective_from=datetime.now(timezone.utc),
    )
    log = EventLog(None)
    report = run_counterfactual_assessment(
        log, window, snapshot, args.max_combo,
        lambda text: metrics.compute_metrics(model, text),
        actor="aisdeveloper",
    )
    doc = render_assessment(report)
    table = assessment_table_delimited(doc, sep="\t" if args.format == "tsv" else ",")
    print(table, end="")
    print(f"recommendation: {doc['recommendation']}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "assessment.json").write_text(serialize_document(doc), encoding="utf-8")
        suffix = "tsv" if args.format == "tsv" else "csv"
        (out / f"assessment.{suffix}").write_text(table, encoding="utf-8")
        figures.assessment_figure(doc, out / "assessment.png")
        print(f"wrote assessment.json, assessment.{suffix}, assessment.png to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    config = load_config(args.config)
    service = GatewayService(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    generated_at = datetime.now(timezone.utc)
    written = []
    if args.kind in ("instructions", "all"):
        doc = generate_instructions(service.snapshot, config.cases, config.system_name, generated_at)
        (out / "instructions.json").write_text(serialize_document(doc), encoding="utf-8")
        written.append("instructions.json")
    if args.kind in ("technical", "all"):
        doc = generate_technical_documentation(
            service.snapshot, config.cases, service.assessments.all(),
            service.log.action_counts(), config.requirements,
            config.system_name, generated_at,
        )
        (out / "technical.json").write_text(serialize_document(doc), encoding="utf-8")
        written.append("technical.json")
        counts = service.log.action_counts()
        if counts:
            figures.event_counts_figure(counts, out / "event_counts.png")
            written.append("event_counts.png")
    if args.kind == "incident":
        if not args.incident_id:
            raise ConfigurationError("--incident-id is required for incident reports")
        incident = service.incidents.get(args.incident_id)
        if incident is None:
            raise DataError(f"unknown incident {args.incident_id!r}")
        anomaly = service.anomalies.get(incident.anomaly_ref)
        if anomaly is None:
            raise DataError(f"incident {args.incident_id} references missing anomaly")
        doc = render_incident_report(incident, anomaly, service.log)
        (out / f"{incident.id}.json").write_text(serialize_document(doc), encoding="utf-8")
        written.append(f"{incident.id}.json")
    service.log.close()
    print(f"wrote {', '.join(written)} to {out}")
    return EXIT_OK


def cmd_export_bundle(args) -> int:
    config = load_config(args.config)
    service = GatewayService(config)
    generated_at = datetime.now(timezone.utc)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    def add_text(tar: tarfile.TarFile, name: str, text: str) -> None:
        import io
        data = text.encode("utf-8")
        info = tarfile.TarInfo(name=name)
        info.size = len(data)
        tar.addfile(info, io.BytesIO(data))

    with tarfile.open(out, "w:gz") as tar:
        add_text(tar, "registry.json",
                 json.dumps(snapshot_to_dict(service.snapshot), indent=2) + "\n")
        add_text(tar, "instructions.json", serialize_document(
            generate_instructions(service.snapshot, config.cases, config.system_name, generated_at)))
        add_text(tar, "technical.json", serialize_document(
            generate_technical_documentation(
                service.snapshot, config.cases, service.assessments.all(),
                service.log.action_counts(), config.requirements,
                config.system_name, generated_at)))
        events = service.log.events(from_seq=args.from_seq)
        add_text(tar, "events.jsonl", "".join(e.to_line() + "\n" for e in events))
        for record in service.assessments.all():
            add_text(tar, f"assessments/{record.id}.json",
                     serialize_document(render_assessment(record)))
        for anomaly in service.anomalies.all():
            from .lifecycle import anomaly_to_dict
            add_text(tar, f"anomalies/{anomaly.id}.json",
                     json.dumps(anomaly_to_dict(anomaly), indent=2) + "\n")
        for incident in service.incidents.all():
            from .lifecycle import incident_to_dict
            add_text(tar, f"incidents/{incident.id}.json",
                     json.dumps(incident_to_dict(incident), indent=2) + "\n")
    service.log.close()
    print(f"wrote audit bundle {out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    from .replay import format_results, run_script

    results = run_script(args.config, args.script)
    print(format_results(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="promptgate",
                                     description="Policy-enforcing LLM gateway toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the gateway HTTP service")
    p.add_argument("--config", help=f"config file (falls back to ${CONFIG_ENV_VAR})")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("train", help="train logistic detectors from a labeled corpus")
    p.add_argument("--corpus", required=True, help="labeled JSONL corpus (text/label/source)")
    p.add_argument("--features", action="append", required=True,
                   help="comma-joined feature pair, e.g. pp,cs (repeatable)")
    p.add_argument("--out", required=True, help="output detector registry file")
    p.add_argument("--model", help="persisted n-gram model file")
    p.add_argument("--lm-corpus", help="plain-text corpus to train the n-gram model")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--smoothing", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--cutoff", type=float, default=0.5)
    p.add_argument("--status", choices=["deployed", "candidate"], default="candidate")
    p.add_argument("--req", default="R4,R6", help="comma-joined requirement links")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("assess", help="offline counterfactual assessment")
    p.add_argument("--window", required=True, help="labeled JSONL window")
    p.add_argument("--registry", required=True, help="detector registry file")
    p.add_argument("--model", help="persisted n-gram model file")
    p.add_argument("--lm-corpus", help="plain-text corpus to train the n-gram model")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--smoothing", type=float, default=1.0)
    p.add_argument("--max-combo", type=int, default=3)
    p.add_argument("--out", help="output directory for document, table, and figure")
    p.add_argument("--format", choices=["tsv", "csv"], default="tsv")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("report", help="generate report documents from gateway state")
    p.add_argument("--config", required=True)
    p.add_argument("--kind", choices=["instructions", "technical", "incident", "all"],
                   default="all")
    p.add_argument("--incident-id")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("export-bundle", help="pack registry, documents, and log for auditors")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output .tar.gz path")
    p.add_argument("--from-seq", type=int, default=1)
    p.set_defaults(func=cmd_export_bundle)

    p = sub.add_parser("replay", help="replay a scripted cycle and verify the action log")
    p.add_argument("--script", required=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ParseError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, TrainingError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PromptGateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
