import json
import random
import threading
from datetime import datetime, timezone

import pytest

from promptgate.detectors import DetectorSpec, LabeledPrompt
from promptgate.errors import (
    AuthorizationError,
    ConfigurationError,
    DataError,
    StateError,
    ValidationError,
)
from promptgate.lifecycle import (
    ActionEvent,
    AssessmentReport,
    ComboResult,
    EventLog,
    RecordStore,
    RegistryDelta,
    RegistrySnapshot,
    anomaly_from_dict,
    anomaly_to_dict,
    apply_reconfiguration,
    check_sustained_coverage,
    flag_anomaly,
    incident_from_dict,
    incident_to_dict,
    notify_incident,
    pending_notification_obligations,
    promote_to_incident,
    record_event,
    run_counterfactual_assessment,
)
from promptgate.metrics import MetricVector
from promptgate.rules import Decision, parse_rule

from oracles import bruteforce_assessment

NOW = datetime(2026, 1, 15, tzinfo=timezone.utc)


def fixed_clock():
    return NOW


def make_decision(verdict, fired=("r1",), version=1):
    return Decision(verdict, tuple(fired), {"pp": 42.0}, version)


def threshold(detector_id, bound, feature="pp", status="deployed", direction="above"):
    return DetectorSpec(detector_id, "threshold", "input", [feature],
                        {"bound": bound, "direction": direction},
                        status, frozenset(["R4"]))


def snapshot(detectors, rules=(), version=1):
    return RegistrySnapshot(version, tuple(detectors), tuple(rules), NOW)


class TestEventLog:
    def test_first_event_gets_seq_one(self):
        log = EventLog(None, clock=fixed_clock)
        assert log.record("A1", "user").seq == 1

    def test_monotone_sequencing(self):
        log = EventLog(None, clock=fixed_clock)
        assert [log.record(a, "system").seq for a in ("A1", "A2")] == [1, 2]

    def test_unknown_action_rejected(self):
        log = EventLog(None, clock=fixed_clock)
        with pytest.raises(ValidationError, match="A19"):
            log.record("A19", "user")

    def test_unknown_actor_rejected(self):
        log = EventLog(None, clock=fixed_clock)
        with pytest.raises(ValidationError, match="actor"):
            log.record("A1", "intruder")

    def test_record_event_wrapper(self):
        log = EventLog(None, clock=fixed_clock)
        event = ActionEvent(0, "A1", "user", NOW, "p1", 1, "")
        assert record_event(log, event) == 1

    def test_durable_and_replayable(self, tmp_path):
        path = tmp_path / "events.log"
        log = EventLog(path, clock=fixed_clock)
        log.record("A1", "user", payload_ref="p1", registry_version=1)
        log.record("A2", "system", payload_ref="p1", registry_version=1)
        # durable before return: the lines are already on disk
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        log.close()

        reopened = EventLog(path, clock=fixed_clock)
        assert [e.action_id for e in reopened.events()] == ["A1", "A2"]
        assert reopened.record("A3", "system").seq == 3
        reopened.close()

    def test_stable_field_order_on_disk(self, tmp_path):
        path = tmp_path / "events.log"
        log = EventLog(path, clock=fixed_clock)
        log.record("A1", "user", payload_ref="p1", registry_version=2, note="n")
        line = path.read_text().splitlines()[0]
        assert list(json.loads(line).keys()) == [
            "seq", "action_id", "actor", "timestamp", "payload_ref",
            "registry_version", "note"]
        log.close()

    def test_concurrent_appends_have_no_gaps(self):
        log = EventLog(None, clock=fixed_clock)

        def hammer():
            for _ in range(50):
                log.record("A1", "user")

        threads = [threading.Thread(target=hammer) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        seqs = [e.seq for e in log.events()]
        assert seqs == list(range(1, 401))

    def test_action_counts(self):
        log = EventLog(None, clock=fixed_clock)
        for action in ("A1", "A1", "A2"):
            log.record(action, "user")
        assert log.action_counts() == {"A1": 2, "A2": 1}


class TestAnomalyFlow:
    def stores(self):
        return EventLog(None, clock=fixed_clock), RecordStore(), RecordStore()

    def test_flagging_creates_open_record_and_events(self):
        log, anomalies, _ = self.stores()
        decision = make_decision("FLAG_ANOMALY")
        record = flag_anomaly(log, anomalies, decision, "req-1", "req-1#out", clock=fixed_clock)
        assert record.status == "open"
        assert record.prompt_ref == "req-1" and record.output_ref == "req-1#out"
        assert [e.action_id for e in log.events()] == ["A13", "A14"]

    def test_block_on_input_has_empty_output_ref(self):
        log, anomalies, _ = self.stores()
        record = flag_anomaly(log, anomalies, make_decision("BLOCK"), "req-2", clock=fixed_clock)
        assert record.output_ref == ""

    def test_pass_decision_rejected(self):
        log, anomalies, _ = self.stores()
        with pytest.raises(StateError):
            flag_anomaly(log, anomalies, make_decision("PASS"), "req-3", clock=fixed_clock)

    def test_promotion_escalates_and_queues_obligation(self):
        log, anomalies, incidents = self.stores()
        anomaly = flag_anomaly(log, anomalies, make_decision("FLAG_ANOMALY"), "req-4",
                               clock=fixed_clock)
        incident = promote_to_incident(log, anomalies, incidents, anomaly,
                                       "serious", "suspected", "narrative",
                                       clock=fixed_clock)
        assert anomaly.status == "escalated"
        assert incident.notified is False
        assert pending_notification_obligations(incidents) == [incident]
        assert log.events()[-1].action_id == "A17"

    def test_minor_incident_has_no_obligation(self):
        log, anomalies, incidents = self.stores()
        anomaly = flag_anomaly(log, anomalies, make_decision("FLAG_ANOMALY"), "req-5",
                               clock=fixed_clock)
        promote_to_incident(log, anomalies, incidents, anomaly, "minor", "none", "",
                            clock=fixed_clock)
        assert pending_notification_obligations(incidents) == []

    def test_double_promotion_rejected(self):
        log, anomalies, incidents = self.stores()
        anomaly = flag_anomaly(log, anomalies, make_decision("FLAG_ANOMALY"), "req-6",
                               clock=fixed_clock)
        promote_to_incident(log, anomalies, incidents, anomaly, "minor", "none", "",
                            clock=fixed_clock)
        with pytest.raises(StateError):
            promote_to_incident(log, anomalies, incidents, anomaly, "serious", "definite", "",
                                clock=fixed_clock)

    def test_bad_enumerations_rejected(self):
        log, anomalies, incidents = self.stores()
        anomaly = flag_anomaly(log, anomalies, make_decision("FLAG_ANOMALY"), "req-7",
                               clock=fixed_clock)
        with pytest.raises(ValidationError):
            promote_to_incident(log, anomalies, incidents, anomaly, "catastrophic", "none", "",
                                clock=fixed_clock)
        with pytest.raises(ValidationError):
            promote_to_incident(log, anomalies, incidents, anomaly, "serious", "perhaps", "",
                                clock=fixed_clock)

    def test_notification_discharges_obligation(self):
        log, anomalies, incidents = self.stores()
        anomaly = flag_anomaly(log, anomalies, make_decision("FLAG_ANOMALY"), "req-8",
                               clock=fixed_clock)
        incident = promote_to_incident(log, anomalies, incidents, anomaly,
                                       "serious", "definite", "", clock=fixed_clock)
        notify_incident(log, incidents, incident, "aisdeveloper")
        assert incident.notified is True
        assert pending_notification_obligations(incidents) == []
        assert log.events()[-1].action_id == "A18"

    def test_record_serialization_roundtrip(self):
        log, anomalies, incidents = self.stores()
        anomaly = flag_anomaly(log, anomalies, make_decision("FLAG_ANOMALY"), "req-9",
                               "req-9#out", clock=fixed_clock)
        incident = promote_to_incident(log, anomalies, incidents, anomaly,
                                       "serious", "suspected", "n", clock=fixed_clock)
        assert anomaly_from_dict(anomaly_to_dict(anomaly)) == anomaly
        assert incident_from_dict(incident_to_dict(incident)) == incident


def metrics_for(text):
    """Deterministic toy metrics keyed off the text for assessment tests."""
    return MetricVector(pp=float(len(text)), cl=text.count(" ") + 1, cs=len(set(text)))


class TestCounterfactualAssessment:
    def window_hand_example(self):
        # 10 attacks at pp=50 (8 of them) / pp=5 (2 of them), 10 benign at pp=5 except one at pp=50.
        attacks = [LabeledPrompt("a" * 50, "attack")] * 8 + [LabeledPrompt("a" * 5, "attack")] * 2
        benign = [LabeledPrompt("b" * 5, "benign")] * 9 + [LabeledPrompt("b" * 50, "benign")]
        return attacks + benign

    def test_hand_computed_confusion(self):
        log = EventLog(None, clock=fixed_clock)
        registry = snapshot([threshold("t_pp", 30.0)])
        report = run_counterfactual_assessment(log, self.window_hand_example(), registry, 1,
                                               metrics_for, clock=fixed_clock)
        combo = report.combo("t_pp")
        assert combo.coverage == pytest.approx(0.8)
        assert combo.accuracy == pytest.approx(17 / 20)
        assert combo.false_positive_rate == pytest.approx(0.1)
        assert [e.action_id for e in log.events()] == ["A9", "A10"]

    def test_disjoint_detectors_union_coverage(self):
        log = EventLog(None, clock=fixed_clock)
        window = ([LabeledPrompt("x" * 40, "attack")] * 8 +       # long: caught by t_long
                  [LabeledPrompt("abcdefghij" * 2, "attack")] * 2 +  # short, wide charset
                  [LabeledPrompt("bbbb", "benign")] * 10)
        registry = snapshot([
            threshold("t_long", 30.0),
            threshold("t_wide", 5.0, feature="cs"),
        ])
        report = run_counterfactual_assessment(log, window, registry, 2,
                                               metrics_for, clock=fixed_clock)
        assert report.combo("t_long").coverage == pytest.approx(0.8)
        assert report.combo("t_long+t_wide").coverage == pytest.approx(1.0)

    def test_missing_class_rejected(self):
        log = EventLog(None, clock=fixed_clock)
        registry = snapshot([threshold("t", 1.0)])
        with pytest.raises(DataError):
            run_counterfactual_assessment(log, [LabeledPrompt("x", "benign")], registry, 1,
                                          metrics_for, clock=fixed_clock)

    def _random_instance(self, rng):
        n_detectors = rng.randint(1, 4)
        detectors = []
        for i in range(n_detectors):
            feature = rng.choice(["pp", "cl", "cs"])
            bound = rng.uniform(1, 40)
            status = rng.choice(["deployed", "candidate"])
            direction = rng.choice(["above", "below"])
            detectors.append(threshold(f"d{i}", bound, feature, status, direction))
        n_prompts = rng.randint(2, 32)
        window = []
        has = {"attack": False, "benign": False}
        alphabet = "abcdefgh "
        for j in range(n_prompts):
            label = rng.choice(["attack", "benign"])
            text = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 60)))
            window.append(LabeledPrompt(text, label))
            has[label] = True
        if not has["attack"]:
            window[0] = LabeledPrompt(window[0].text, "attack")
        if not has["benign"]:
            window[-1] = LabeledPrompt(window[-1].text, "benign")
        return detectors, window, rng.randint(1, 4)

    def test_matches_bruteforce_enumerator(self):
        rng = random.Random(99)
        for _ in range(50):
            detectors, window, max_combo = self._random_instance(rng)
            registry = snapshot(detectors)
            log = EventLog(None, clock=fixed_clock)
            report = run_counterfactual_assessment(log, window, registry, max_combo,
                                                   metrics_for, clock=fixed_clock)
            flags = {}
            for spec in detectors:
                flags[spec.id] = []
                for prompt in window:
                    value = metrics_for(prompt.text).get(spec.features[0])
                    hit = (value > spec.params["bound"]
                           if spec.params["direction"] == "above"
                           else value < spec.params["bound"])
                    flags[spec.id].append(hit)
            expected_rows, expected_deployed = bruteforce_assessment(
                [p.label for p in window], flags,
                [d.id for d in detectors if d.status == "deployed"], max_combo)
            assert report.deployed_combo_id == expected_deployed
            assert len(report.combos) == len(expected_rows)
            for combo, row in zip(report.combos, expected_rows):
                assert combo.detector_ids == row["ids"]
                assert combo.coverage == pytest.approx(row["coverage"])
                assert combo.accuracy == pytest.approx(row["accuracy"])
                assert combo.false_positive_rate == pytest.approx(row["false_positive_rate"])

    def test_disjunction_monotonicity(self):
        rng = random.Random(123)
        for _ in range(30):
            detectors, window, _ = self._random_instance(rng)
            registry = snapshot(detectors)
            log = EventLog(None, clock=fixed_clock)
            report = run_counterfactual_assessment(log, window, registry, len(detectors),
                                                   metrics_for, clock=fixed_clock)
            by_ids = {c.detector_ids: c for c in report.combos}
            for ids, combo in by_ids.items():
                # a combo is at least as good as its best member on coverage
                member_best = max(by_ids[(d,)].coverage for d in ids)
                assert combo.coverage >= member_best - 1e-12
                # adding a detector never lowers coverage or FPR
                for other_ids, other in by_ids.items():
                    if set(ids) < set(other_ids):
                        assert other.coverage >= combo.coverage - 1e-12
                        assert other.false_positive_rate >= combo.false_positive_rate - 1e-12

    def test_ranking_order(self):
        log = EventLog(None, clock=fixed_clock)
        registry = snapshot([threshold("a", 30.0), threshold("b", 500.0)])
        window = ([LabeledPrompt("x" * 40, "attack")] * 3 +
                  [LabeledPrompt("y" * 4, "benign")] * 3)
        report = run_counterfactual_assessment(log, window, registry, 2,
                                               metrics_for, clock=fixed_clock)
        keys = [(-c.coverage, c.false_positive_rate, c.detector_ids) for c in report.combos]
        assert keys == sorted(keys)
        assert report.recommendation == tuple(c.combo_id for c in report.combos)


class TestSustainedCoverage:
    def report_with_coverage(self, coverage, report_id="r"):
        combo = ComboResult(("d",), coverage, 0.9, 0.1)
        return AssessmentReport(report_id, ("w#0",), (combo,), "d", ("d",), NOW, 1)

    def test_below_threshold_triggers_with_deficit(self):
        trigger, deficits = check_sustained_coverage([self.report_with_coverage(0.8)], 0.9)
        assert trigger is True
        assert deficits == [pytest.approx(0.1)]

    def test_above_threshold_quiet(self):
        trigger, _ = check_sustained_coverage([self.report_with_coverage(0.95)], 0.9)
        assert trigger is False

    def test_exact_boundary_does_not_trigger(self):
        trigger, deficits = check_sustained_coverage([self.report_with_coverage(0.9)], 0.9)
        assert trigger is False
        assert deficits == [0.0]

    def test_only_latest_report_decides(self):
        history = [self.report_with_coverage(0.5, "old"), self.report_with_coverage(0.95, "new")]
        trigger, deficits = check_sustained_coverage(history, 0.9)
        assert trigger is False
        assert deficits[0] == pytest.approx(0.4) and deficits[1] == 0.0

    def test_empty_history_rejected(self):
        with pytest.raises(DataError):
            check_sustained_coverage([], 0.9)


class TestReconfiguration:
    def base_snapshot(self):
        rule = parse_rule("gate: INPUT WHEN score(t_pp) >= 1.0 THEN BLOCK REQ R4")
        return snapshot([threshold("t_pp", 100.0)], [rule])

    def test_version_bump_and_immutability(self):
        log = EventLog(None, clock=fixed_clock)
        current = self.base_snapshot()
        delta = RegistryDelta(upsert_detectors=(threshold("t_pp", 120.0),))
        new = apply_reconfiguration(log, current, delta, "aisdeveloper", clock=fixed_clock)
        assert new.version == 2
        assert new.detector("t_pp").params["bound"] == 120.0
        assert current.detector("t_pp").params["bound"] == 100.0
        event = log.events()[-1]
        assert event.action_id == "A12" and "t_pp" in event.note

    def test_rule_with_empty_requirements_rejected(self):
        log = EventLog(None, clock=fixed_clock)
        delta = RegistryDelta(upsert_rules=("bad: INPUT WHEN pp > 1 THEN PASS",))
        with pytest.raises(Exception):
            apply_reconfiguration(log, self.base_snapshot(), delta, "aisdeveloper",
                                  clock=fixed_clock)

    def test_dangling_rule_reference_rejected(self):
        log = EventLog(None, clock=fixed_clock)
        current = self.base_snapshot()
        delta = RegistryDelta(remove_detector_ids=("t_pp",))
        with pytest.raises(ConfigurationError, match="unknown detector"):
            apply_reconfiguration(log, current, delta, "aisdeveloper", clock=fixed_clock)

    def test_non_developer_actor_rejected(self):
        log = EventLog(None, clock=fixed_clock)
        delta = RegistryDelta()
        with pytest.raises(AuthorizationError):
            apply_reconfiguration(log, self.base_snapshot(), delta, "auditor",
                                  clock=fixed_clock)
        assert log.events() == []

    def test_failed_validation_leaves_version_unchanged(self):
        log = EventLog(None, clock=fixed_clock)
        current = self.base_snapshot()
        bad_spec = threshold("t_new", 1.0)
        bad_spec.requirement_links = frozenset()
        delta = RegistryDelta(upsert_detectors=(bad_spec,))
        with pytest.raises(ConfigurationError):
            apply_reconfiguration(log, current, delta, "aisdeveloper", clock=fixed_clock)
        assert current.version == 1
        assert log.events() == []  # nothing published, nothing logged
