import json
from datetime import datetime, timezone
from pathlib import Path

import pytest

from promptgate import metrics
from promptgate.config import load_config
from promptgate.service import GatewayService

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO_ROOT / "config"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" in getattr(report, "nodeid", ""):
                name = report.nodeid.split("::")[-1]
                lines.append((name, outcome == "passed"))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, passed in sorted(lines):
            terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}")


def fixed_clock():
    return datetime(2026, 1, 15, 12, 0, 0, tzinfo=timezone.utc)


@pytest.fixture
def clock():
    return fixed_clock


@pytest.fixture(scope="session")
def lm_model():
    corpus = [l for l in (CONFIG_DIR / "corpus_lm.txt").read_text().splitlines() if l]
    return metrics.train_ngram(corpus, order=2, smoothing=1.0)


def write_config(tmp_path: Path, **overrides) -> Path:
    """A config file pointing at the repo's starter artifacts, with overrides."""
    raw = {
        "system_name": "promptgate-test",
        "listen": {"host": "127.0.0.1", "port": 8099},
        "backend": {"kind": "mock"},
        "language_model": {"corpus_path": str(CONFIG_DIR / "corpus_lm.txt"),
                           "order": 2, "smoothing": 1.0},
        "registry_path": str(CONFIG_DIR / "detectors.json"),
        "rules_path": str(CONFIG_DIR / "rules.rules"),
        "cases_path": str(CONFIG_DIR / "cases.json"),
        "mappings_path": str(CONFIG_DIR / "mappings.json"),
        "tokens": {
            "aisdeveloper": "t-dev",
            "auditor": "t-audit",
            "llmdeveloper": "t-llm",
        },
        "max_prompt_bytes": 32768,
        "output_flag_mode": "suppress",
        "coverage_threshold": 0.9,
        "assessment": {
            "every_n_prompts": 0,
            "window_path": str(CONFIG_DIR / "corpus_labeled.jsonl"),
            "max_combo_size": 3,
        },
    }
    raw.update(overrides)
    path = tmp_path / "gateway.json"
    path.write_text(json.dumps(raw, indent=2))
    return path


@pytest.fixture
def config_path(tmp_path):
    return write_config(tmp_path)


@pytest.fixture
def service(config_path):
    return GatewayService(load_config(config_path), clock=fixed_clock)
