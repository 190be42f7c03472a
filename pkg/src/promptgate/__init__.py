"""promptgate: a policy-enforcing gateway between users and an LLM backend.

Layers: metrics (pp/cl/cs measurements), detectors (threshold / logistic /
keyword), rules + assurance cases (the reasoning middleware), lifecycle
(audit log, anomalies, incidents, counterfactual assessment), reporting
(auditable documents and figures), and the HTTP gateway tying them together.
"""

__version__ = "0.1.0"

from .metrics import MetricVector, NGramModel, compute_metrics, train_ngram
from .rules import Decision, Rule, evaluate_rules, parse_rule, print_rule
from .service import ChatRequest, ChatResponse, GatewayService

__all__ = [
    "ChatRequest",
    "ChatResponse",
    "Decision",
    "GatewayService",
    "MetricVector",
    "NGramModel",
    "Rule",
    "compute_metrics",
    "evaluate_rules",
    "parse_rule",
    "print_rule",
    "train_ngram",
    "__version__",
]
