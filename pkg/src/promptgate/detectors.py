"""Detector zoo: single-metric threshold detectors, logistic-regression pair
detectors, and output keyword flags, plus deterministic training and batch
classification over a versioned registry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, TrainingError
from .metrics import MetricVector

KINDS = ("threshold", "logistic", "keyword")
STAGES = ("input", "output")
STATUSES = ("deployed", "candidate")
FEATURE_NAMES = ("pp", "cl", "cs")
LABELS = ("benign", "attack")

# Guard against zero-variance features when standardizing.
STD_FLOOR = 1e-9


@dataclass(frozen=True)
class DetectorScore:
    detector_id: str
    score: float
    label: str
    registry_version: int


@dataclass(frozen=True)
class LabeledPrompt:
    text: str
    label: str
    source: str = ""


@dataclass
class DetectorSpec:
    """One configured detector.

    `params` is kind-specific:
      threshold -- {"bound": float, "direction": "above"|"below"}
      logistic  -- {"weights": [...], "bias": float, "mean": [...], "std": [...],
                    "cutoff": float, "training_report": {...}?}
      keyword   -- {"keywords": [lowercase substrings]}
    """

    id: str
    kind: str
    stage: str
    features: list[str]
    params: dict
    status: str = "candidate"
    requirement_links: frozenset[str] = field(default_factory=frozenset)
    purpose: str = ""

    def is_deployed(self) -> bool:
        return self.status == "deployed"


@dataclass(frozen=True)
class ClassificationBatch:
    text_ref: str
    scores: tuple[DetectorScore, ...]
    detector_set: str
    stage: str
    registry_version: int


def validate_spec(spec: DetectorSpec) -> list[str]:
    """All invariant violations of a single spec, as human-readable defects."""
    defects = []
    if spec.kind not in KINDS:
        defects.append(f"detector {spec.id}: unknown kind {spec.kind!r}")
        return defects
    if spec.stage not in STAGES:
        defects.append(f"detector {spec.id}: unknown stage {spec.stage!r}")
    if spec.status not in STATUSES:
        defects.append(f"detector {spec.id}: unknown status {spec.status!r}")
    if not spec.requirement_links:
        defects.append(f"detector {spec.id}: requirement_links must be nonempty")
    for feat in spec.features:
        if feat not in FEATURE_NAMES:
            defects.append(f"detector {spec.id}: unknown feature {feat!r}")

    if spec.kind == "threshold":
        if len(spec.features) != 1:
            defects.append(f"detector {spec.id}: threshold kind needs exactly one feature")
        if spec.params.get("direction") not in ("above", "below"):
            defects.append(f"detector {spec.id}: threshold direction must be 'above' or 'below'")
        if not isinstance(spec.params.get("bound"), (int, float)):
            defects.append(f"detector {spec.id}: threshold bound missing or non-numeric")
    elif spec.kind == "logistic":
        weights = spec.params.get("weights", [])
        mean = spec.params.get("mean", [])
        std = spec.params.get("std", [])
        if len(weights) != len(spec.features):
            defects.append(f"detector {spec.id}: weights length != features length")
        if len(mean) != len(spec.features) or len(std) != len(spec.features):
            defects.append(f"detector {spec.id}: standardization mean/std length != features length")
        if any(s <= 0 for s in std):
            defects.append(f"detector {spec.id}: standardization std must be > 0")
        cutoff = spec.params.get("cutoff", 0.5)
        if not (0.0 < cutoff < 1.0):
            defects.append(f"detector {spec.id}: cutoff must lie in (0,1)")
        if not isinstance(spec.params.get("bias"), (int, float)):
            defects.append(f"detector {spec.id}: bias missing or non-numeric")
    elif spec.kind == "keyword":
        if spec.stage != "output":
            defects.append(f"detector {spec.id}: keyword detectors are output-stage only")
        keywords = spec.params.get("keywords", [])
        if not keywords:
            defects.append(f"detector {spec.id}: keyword list must be nonempty")
        if any(k != k.lower() for k in keywords):
            defects.append(f"detector {spec.id}: keywords must be lowercase")
    return defects


def evaluate_threshold_detector(
    spec: DetectorSpec, m: MetricVector, registry_version: int = 0
) -> DetectorScore:
    """Attack iff the single feature strictly violates the bound in the configured direction."""
    feature = spec.features[0]
    if feature not in FEATURE_NAMES:
        raise ConfigurationError(f"detector {spec.id}: unknown feature {feature!r}")
    value = m.get(feature)
    bound = float(spec.params["bound"])
    if spec.params["direction"] == "above":
        hit = value > bound
    else:
        hit = value < bound
    return DetectorScore(spec.id, 1.0 if hit else 0.0, "attack" if hit else "benign", registry_version)


def _sigmoid(t: float) -> float:
    # Branch keeps exp() off large positive arguments.
    if t >= 0:
        return float(1.0 / (1.0 + np.exp(-t)))
    e = np.exp(t)
    return float(e / (1.0 + e))


def evaluate_logistic_detector(
    spec: DetectorSpec, m: MetricVector, registry_version: int = 0
) -> DetectorScore:
    """Sigmoid over standardized selected features; attack iff score >= cutoff (inclusive)."""
    std = spec.params["std"]
    if any(s <= 0 for s in std):
        raise ConfigurationError(f"detector {spec.id}: standardization std must be > 0")
    mean = spec.params["mean"]
    weights = spec.params["weights"]
    cutoff = float(spec.params.get("cutoff", 0.5))
    t = float(spec.params["bias"])
    for feat, w, mu, sd in zip(spec.features, weights, mean, std):
        t += w * (m.get(feat) - mu) / sd
    score = _sigmoid(t)
    label = "attack" if score >= cutoff else "benign"
    return DetectorScore(spec.id, score, label, registry_version)


def evaluate_keyword_detector(
    spec: DetectorSpec, output_text: str, registry_version: int = 0
) -> DetectorScore:
    """Attack iff any keyword occurs as a case-insensitive substring.

    Substring (not word-boundary) semantics: over-flagging is accepted and
    documented; refining match rules is a detector-zoo extension.
    """
    lowered = output_text.lower()
    hit = any(kw in lowered for kw in spec.params["keywords"])
    return DetectorScore(spec.id, 1.0 if hit else 0.0, "attack" if hit else "benign", registry_version)


def score_detector(
    spec: DetectorSpec,
    m_or_text: MetricVector | str,
    registry_version: int = 0,
    text: str | None = None,
) -> DetectorScore:
    """Dispatch a single spec against the payload it needs.

    Keyword detectors consume text, the metric-based kinds consume a
    MetricVector; `text` may accompany a MetricVector so one batch can span
    both kinds at the output stage.
    """
    if spec.kind == "keyword":
        payload = m_or_text if isinstance(m_or_text, str) else text
        if payload is None:
            raise ConfigurationError(f"detector {spec.id}: keyword detector needs the output text")
        return evaluate_keyword_detector(spec, payload, registry_version)
    if not isinstance(m_or_text, MetricVector):
        raise ConfigurationError(f"detector {spec.id}: {spec.kind} detector needs a metric vector")
    if spec.kind == "threshold":
        return evaluate_threshold_detector(spec, m_or_text, registry_version)
    if spec.kind == "logistic":
        return evaluate_logistic_detector(spec, m_or_text, registry_version)
    raise ConfigurationError(f"detector {spec.id}: unknown kind {spec.kind!r}")


def run_batch(
    registry: Sequence[DetectorSpec],
    m_or_text: MetricVector | str,
    stage: str,
    detector_set: str = "deployed",
    registry_version: int = 0,
    text_ref: str = "",
    text: str | None = None,
) -> ClassificationBatch:
    """Evaluate every registry detector matching stage and status filter, in id order."""
    if detector_set not in ("deployed", "all"):
        raise ConfigurationError(f"unknown detector_set {detector_set!r}")
    ids = [spec.id for spec in registry]
    if len(ids) != len(set(ids)):
        raise ConfigurationError("registry detector ids are not unique")
    scores = []
    for spec in sorted(registry, key=lambda s: s.id):
        if spec.stage != stage:
            continue
        if detector_set == "deployed" and not spec.is_deployed():
            continue
        try:
            scores.append(score_detector(spec, m_or_text, registry_version, text=text))
        except ConfigurationError:
            raise
        except Exception as exc:  # annotate with the offending detector
            raise ConfigurationError(f"detector {spec.id}: {exc}") from exc
    return ClassificationBatch(text_ref, tuple(scores), detector_set, stage, registry_version)


# --- logistic training -------------------------------------------------------

@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.1
    epochs: int = 500
    l2: float = 1e-4


@dataclass(frozen=True)
class LogisticFit:
    weights: tuple[float, ...]
    bias: float
    mean: tuple[float, ...]
    std: tuple[float, ...]
    report: dict


def logistic_loss(w: np.ndarray, b: float, z: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Mean cross-entropy plus (l2/2)*||w||^2 on standardized features z."""
    t = z @ w + b
    # softplus(t) - y*t is the stable form of -[y log s + (1-y) log (1-s)]
    ce = float(np.mean(np.logaddexp(0.0, t) - y * t))
    return ce + 0.5 * l2 * float(w @ w)


def logistic_gradient(
    w: np.ndarray, b: float, z: np.ndarray, y: np.ndarray, l2: float
) -> tuple[np.ndarray, float]:
    t = z @ w + b
    s = 1.0 / (1.0 + np.exp(-np.clip(t, -500, 500)))
    resid = s - y
    grad_w = z.T @ resid / len(y) + l2 * w
    grad_b = float(np.mean(resid))
    return grad_w, grad_b


def train_logistic(
    data: Sequence[tuple[Sequence[float], str]], config: TrainingConfig = TrainingConfig()
) -> LogisticFit:
    """Full-batch gradient descent from w=0, b=0 on z-scored features.

    Deterministic: identical data and config give bit-identical parameters.
    """
    if not data:
        raise DataError("training data is empty")
    labels = {label for _, label in data}
    if not labels <= set(LABELS):
        raise DataError(f"unknown labels in training data: {sorted(labels - set(LABELS))}")
    if len(labels) < 2:
        raise TrainingError("training data must contain both classes")
    x = np.asarray([vec for vec, _ in data], dtype=np.float64)
    if x.ndim != 2:
        raise DataError("feature vectors must all have the same length")
    if not np.all(np.isfinite(x)):
        raise DataError("feature vectors contain NaN or infinite values")
    y = np.asarray([1.0 if label == "attack" else 0.0 for _, label in data])

    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), STD_FLOOR)
    z = (x - mean) / std

    w = np.zeros(x.shape[1])
    b = 0.0
    loss_history = [logistic_loss(w, b, z, y, config.l2)]
    for _ in range(config.epochs):
        grad_w, grad_b = logistic_gradient(w, b, z, y, config.l2)
        w = w - config.learning_rate * grad_w
        b = b - config.learning_rate * grad_b
        loss_history.append(logistic_loss(w, b, z, y, config.l2))

    preds = (z @ w + b) >= 0.0  # score >= 0.5 at the default cutoff
    accuracy = float(np.mean(preds == (y == 1.0)))
    report = {
        "final_loss": loss_history[-1],
        "training_accuracy": accuracy,
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "l2": config.l2,
        "n_samples": len(y),
        "loss_history": loss_history,
    }
    return LogisticFit(tuple(w.tolist()), float(b), tuple(mean.tolist()), tuple(std.tolist()), report)


# --- file formats ------------------------------------------------------------

def load_labeled_corpus(path: str | Path) -> list[LabeledPrompt]:
    """One JSON record per line with fields text, label, source."""
    prompts = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            prompt = LabeledPrompt(
                text=record["text"], label=record["label"], source=record.get("source", "")
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: malformed corpus record: {exc}") from exc
        if prompt.label not in LABELS:
            raise DataError(f"{path}:{lineno}: label must be one of {LABELS}, got {prompt.label!r}")
        prompts.append(prompt)
    return prompts


def save_labeled_corpus(prompts: Iterable[LabeledPrompt], path: str | Path) -> None:
    lines = [
        json.dumps({"text": p.text, "label": p.label, "source": p.source}, ensure_ascii=False)
        for p in prompts
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def spec_to_dict(spec: DetectorSpec) -> dict:
    return {
        "id": spec.id,
        "kind": spec.kind,
        "stage": spec.stage,
        "features": list(spec.features),
        "params": spec.params,
        "status": spec.status,
        "requirement_links": sorted(spec.requirement_links),
        "purpose": spec.purpose,
    }


def spec_from_dict(record: dict) -> DetectorSpec:
    try:
        return DetectorSpec(
            id=record["id"],
            kind=record["kind"],
            stage=record["stage"],
            features=list(record.get("features", [])),
            params=dict(record.get("params", {})),
            status=record.get("status", "candidate"),
            requirement_links=frozenset(record.get("requirement_links", [])),
            purpose=record.get("purpose", ""),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed detector record: {exc}") from exc


def load_registry_file(path: str | Path) -> tuple[int, list[DetectorSpec]]:
    """Detector registry file: {"version": int, "detectors": [spec records]}."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        version = int(payload["version"])
        specs = [spec_from_dict(rec) for rec in payload["detectors"]]
    except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        raise ConfigurationError(f"malformed detector registry file {path}: {exc}") from exc
    defects = [d for spec in specs for d in validate_spec(spec)]
    ids = [s.id for s in specs]
    if len(ids) != len(set(ids)):
        defects.append("detector ids are not unique")
    if defects:
        raise ConfigurationError(f"invalid detector registry file {path}", defects)
    return version, specs


def save_registry_file(version: int, specs: Sequence[DetectorSpec], path: str | Path) -> None:
    payload = {"version": version, "detectors": [spec_to_dict(s) for s in specs]}
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
