"""Acceptance criteria, one test per criterion.

Each test pins the tolerances stated up front; a terminal-summary hook in
conftest prints one PASS/FAIL line per criterion after the run.
"""

import itertools
import json
import random
import threading
import time

import numpy as np
import pytest

from promptgate import metrics
from promptgate.assurance import coverage_of_requirements, load_requirement_registry
from promptgate.config import load_config
from promptgate.detectors import (
    DetectorSpec,
    LabeledPrompt,
    TrainingConfig,
    logistic_gradient,
    logistic_loss,
    train_logistic,
    validate_spec,
)
from promptgate.errors import ParseError
from promptgate.lifecycle import (
    AssessmentReport,
    ComboResult,
    EventLog,
    RegistryDelta,
    RegistrySnapshot,
    check_sustained_coverage,
    run_counterfactual_assessment,
)
from promptgate.metrics import MetricVector
from promptgate.replay import run_script
from promptgate.rules import Atom, Rule, ast_terms, evaluate_rules, parse_rule, print_rule
from promptgate.service import ChatRequest, GatewayService

from conftest import CONFIG_DIR, fixed_clock, write_config
from oracles import bruteforce_assessment, bruteforce_ast_eval, finite_difference_gradient
from test_rules import random_ast, satisfying_value


def test_cycle_conformance():
    """Replay of the three shipped scripts passes; primary is exactly A1..A6; < 10 s."""
    started = time.monotonic()
    outcomes = {}
    for script in ("primary", "secondary", "tertiary"):
        results = run_script(CONFIG_DIR / "replay.json", CONFIG_DIR / "scripts" / f"{script}.json")
        assert all(r.passed for r in results), f"{script}: {[r.detail for r in results if not r.passed]}"
        outcomes[script] = results
    elapsed = time.monotonic() - started
    assert elapsed < 10.0, f"replay took {elapsed:.2f}s"

    assert outcomes["primary"][0].actual == ("A1", "A2", "A3", "A4", "A5", "A6")

    secondary_actions = [a for r in outcomes["secondary"] for a in r.actual]
    required_order = ["A7", "A0", "A8", "A9", "A10", "A11", "A12"]
    positions = [secondary_actions.index(a) for a in required_order]
    assert positions == sorted(positions), secondary_actions

    tertiary_actions = [a for r in outcomes["tertiary"] for a in r.actual]
    for action in ("A13", "A14", "A17", "A18"):
        assert action in tertiary_actions
    assert tertiary_actions.index("A17") < tertiary_actions.index("A18")
    assert tertiary_actions.index("A13") < tertiary_actions.index("A17")


def test_metric_oracle():
    """Hand-computed Laplace values within 1e-9; pp >= 1 on 10,000 random strings."""
    model = metrics.train_ngram(["aaaa"], order=2, smoothing=1.0)
    assert metrics.perplexity(model, "aaa") == pytest.approx(1.25, abs=1e-9)
    assert metrics.perplexity(model, "ab") == pytest.approx(5.0, abs=1e-9)

    rng = random.Random(2026)
    alphabet = "abcdefghij XYZ!?"
    checked = 0
    for _ in range(50):
        corpus = ["".join(rng.choice(alphabet) for _ in range(rng.randint(0, 60)))
                  for _ in range(rng.randint(0, 6))]
        random_model = metrics.train_ngram(
            corpus, order=rng.randint(2, 4), smoothing=rng.choice([0.1, 0.5, 1.0, 2.0]))
        for _ in range(200):
            text = "".join(rng.choice(alphabet + "~é☠") for _ in range(rng.randint(0, 40)))
            assert metrics.perplexity(random_model, text) >= 1.0
            checked += 1
    assert checked == 10_000


def test_gradient_check():
    """Analytic gradient vs central differences within 1e-6 absolute; separable accuracy 1.0."""
    rng = random.Random(77)
    for _ in range(20):
        n, dim = rng.randint(4, 30), rng.randint(1, 4)
        z = np.array([[rng.uniform(-3, 3) for _ in range(dim)] for _ in range(n)])
        y = np.array([float(rng.random() < 0.5) for _ in range(n)])
        l2 = rng.choice([0.0, 1e-4, 1e-2])
        for _ in range(10):
            w = np.array([rng.uniform(-2, 2) for _ in range(dim)])
            b = rng.uniform(-2, 2)
            grad_w, grad_b = logistic_gradient(w, b, z, y, l2)
            fd_w, fd_b = finite_difference_gradient(
                lambda wv, bv: logistic_loss(np.array(wv), bv, z, y, l2), list(w), b,
                step=1e-5)
            assert np.max(np.abs(np.array(fd_w) - grad_w)) < 1e-6
            assert abs(fd_b - grad_b) < 1e-6

    data = [((10.0, 10.0), "attack")] * 20 + [((-10.0, -10.0), "benign")] * 20
    first = train_logistic(data, TrainingConfig(0.1, 500, 1e-4))
    second = train_logistic(data, TrainingConfig(0.1, 500, 1e-4))
    assert first.report["training_accuracy"] == 1.0
    assert first.weights == second.weights and first.bias == second.bias


def test_rule_engine_oracle():
    """1,000 random conditions with <= 3 atoms: engine == truth table; print round-trip."""
    rng = random.Random(20260115)
    comparators = [">", ">=", "<", "<=", "==", "!="]
    for i in range(1000):
        n_atoms = rng.randint(1, 3)
        atoms = [Atom(f"score(d{j})", rng.choice(comparators), round(rng.uniform(-50, 50), 2))
                 for j in range(n_atoms)]
        condition = random_ast(rng, 3, atoms)
        rule = Rule(f"acc{i}", "input", condition, "BLOCK", 0, frozenset({"R2"}))

        printed = print_rule(rule)
        assert parse_rule(printed) == rule
        assert print_rule(parse_rule(printed)) == printed

        used = sorted(ast_terms(condition))
        by_term = {a.term: a for a in atoms}
        for assignment in itertools.product([False, True], repeat=len(used)):
            truth = dict(zip(used, assignment))
            env = {term: satisfying_value(by_term[term], truth[term]) for term in used}
            expected = bruteforce_ast_eval(condition, lambda a: truth[a.term])
            decision = evaluate_rules([rule], env, "input")
            assert (decision.verdict == "BLOCK") == expected, printed


def _toy_metrics(text: str) -> MetricVector:
    return MetricVector(pp=float(len(text)), cl=text.count(" ") + 1, cs=len(set(text)))


def test_counterfactual_oracle():
    """50 random instances (<= 4 detectors x <= 32 prompts) match the brute-force enumerator."""
    rng = random.Random(404)
    for _ in range(50):
        n_detectors = rng.randint(1, 4)
        detectors = []
        for i in range(n_detectors):
            detectors.append(DetectorSpec(
                f"d{i}", "threshold", "input", [rng.choice(["pp", "cl", "cs"])],
                {"bound": rng.uniform(1, 40), "direction": rng.choice(["above", "below"])},
                rng.choice(["deployed", "candidate"]), frozenset({"R4"})))
        window = []
        for _ in range(rng.randint(2, 32)):
            text = "".join(rng.choice("abcdefgh ") for _ in range(rng.randint(1, 60)))
            window.append(LabeledPrompt(text, rng.choice(["attack", "benign"])))
        window[0] = LabeledPrompt(window[0].text, "attack")
        window[-1] = LabeledPrompt(window[-1].text, "benign")
        max_combo = rng.randint(1, 4)

        registry = RegistrySnapshot(1, tuple(detectors), (), fixed_clock())
        report = run_counterfactual_assessment(
            EventLog(None, clock=fixed_clock), window, registry, max_combo,
            _toy_metrics, clock=fixed_clock)

        flags = {}
        for spec in detectors:
            column = []
            for prompt in window:
                value = _toy_metrics(prompt.text).get(spec.features[0])
                column.append(value > spec.params["bound"]
                              if spec.params["direction"] == "above"
                              else value < spec.params["bound"])
            flags[spec.id] = column
        expected_rows, expected_deployed = bruteforce_assessment(
            [p.label for p in window], flags,
            [d.id for d in detectors if d.status == "deployed"], max_combo)

        assert report.deployed_combo_id == expected_deployed
        assert len(report.combos) == len(expected_rows)
        by_ids = {}
        for combo, row in zip(report.combos, expected_rows):
            assert combo.detector_ids == row["ids"]
            assert combo.coverage == pytest.approx(row["coverage"], abs=1e-12)
            assert combo.accuracy == pytest.approx(row["accuracy"], abs=1e-12)
            assert combo.false_positive_rate == pytest.approx(row["false_positive_rate"], abs=1e-12)
            by_ids[combo.detector_ids] = combo
        # disjunction monotonicity on every instance
        for ids, combo in by_ids.items():
            for other_ids, other in by_ids.items():
                if set(ids) < set(other_ids):
                    assert other.coverage >= combo.coverage - 1e-12
                    assert other.false_positive_rate >= combo.false_positive_rate - 1e-12


def test_compliance_traceability():
    """Starter config covers exactly the documented requirement ids; links are mandatory."""
    config = load_config(CONFIG_DIR / "gateway.json")
    coverage, uncovered = coverage_of_requirements(config.cases, config.requirements)
    covered = sorted((rid for rid, claims in coverage.items() if claims),
                     key=lambda r: int(r[1:]))
    assert covered == ["R2", "R4", "R6", "R7", "R9", "R12", "R14", "R16"]
    assert uncovered == ["R0", "R1", "R3", "R5", "R8", "R10", "R11", "R13", "R15"]
    assert set(covered) | set(uncovered) == {r.id for r in load_requirement_registry()}

    for spec in config.detectors:
        if spec.is_deployed():
            assert spec.requirement_links, f"detector {spec.id} lacks requirement links"
    for rule in config.rules:
        assert rule.requirement_links, f"rule {rule.id} lacks requirement links"

    # validation rejects detectors and rules without links
    linkless = DetectorSpec("naked", "threshold", "input", ["pp"],
                            {"bound": 1.0, "direction": "above"}, "deployed", frozenset())
    assert any("requirement_links" in d for d in validate_spec(linkless))
    with pytest.raises(ParseError):
        parse_rule("naked: INPUT WHEN pp > 1 THEN BLOCK")


def test_snapshot_isolation(tmp_path):
    """100 concurrent chats + 10 reconfigurations: single version per decision, gapless log."""
    service = GatewayService(load_config(write_config(tmp_path)), clock=fixed_clock)
    errors = []
    barrier = threading.Barrier(15)  # 10 chat workers + 5 reconfig workers

    def chat_worker(batch):
        try:
            barrier.wait(timeout=10)
            for i in batch:
                service.handle_chat(ChatRequest(prompt=f"Please describe landmark number {i}."))
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    def reconfig_worker(start):
        try:
            barrier.wait(timeout=10)
            for i in range(start, start + 2):
                service.reconfigure("aisdeveloper", RegistryDelta(
                    upsert_rules=(f"acc{i}: INPUT WHEN cl > {800 + i}.0 "
                                  f"THEN FLAG_ANOMALY REQ R5",)))
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    chats = [list(range(i * 10, (i + 1) * 10)) for i in range(10)]
    threads = [threading.Thread(target=chat_worker, args=(batch,)) for batch in chats]
    threads += [threading.Thread(target=reconfig_worker, args=(i * 2,)) for i in range(5)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    assert errors == []
    records = service.requests.all()
    assert len(records) == 100
    published = set(service.published_versions)
    assert len(published) == 11  # version 1 + 10 reconfigurations
    for record in records:
        versions = {record.registry_version, record.input_decision["registry_version"]}
        versions |= {s["registry_version"] for s in record.input_scores}
        if record.output_decision is not None:
            versions.add(record.output_decision["registry_version"])
            versions |= {s["registry_version"] for s in (record.output_scores or [])}
        assert len(versions) == 1, f"{record.id} mixed versions {versions}"
        assert versions <= published

    seqs = [e.seq for e in service.log.events()]
    assert seqs == list(range(1, len(seqs) + 1)), "sequence has gaps or disorder"


def test_sustained_coverage_trigger():
    """Trigger iff deployed coverage < threshold; exact equality stays quiet."""
    def report(coverage, rid):
        combo = ComboResult(("d",), coverage, 0.9, 0.05)
        return AssessmentReport(rid, ("w#0",), (combo,), "d", ("d",), fixed_clock(), 1)

    history = [report(0.95, "a1"), report(0.9, "a2"), report(0.8, "a3")]
    trigger, deficits = check_sustained_coverage(history, 0.9)
    assert trigger is True
    assert deficits == [0.0, 0.0, pytest.approx(0.1)]

    quiet_history = [report(0.8, "b1"), report(0.95, "b2"), report(0.9, "b3")]
    trigger, deficits = check_sustained_coverage(quiet_history, 0.9)
    assert trigger is False  # boundary equality does not fire
    assert deficits == [pytest.approx(0.1), 0.0, 0.0]

    trigger, _ = check_sustained_coverage([report(0.9, "c1")] * 3, 0.9)
    assert trigger is False
