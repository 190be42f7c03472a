"""Figure rendering for the report path: every figure goes to a file next to
the delimited output, never to an interactive window."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def assessment_figure(doc: dict, path: str | Path) -> Path:
    """Coverage and false-positive rate per combination, deployed bar highlighted."""
    rows = doc["table"]
    path = Path(path)
    labels = [r["combo_id"] for r in rows]
    coverage = [r["coverage"] for r in rows]
    fpr = [r["false_positive_rate"] for r in rows]
    colors = ["#d62728" if r["deployed"] else "#1f77b4" for r in rows]

    fig, (ax_cov, ax_fpr) = plt.subplots(
        2, 1, figsize=(max(6.0, 0.6 * len(rows) + 2.0), 6.0), sharex=True
    )
    x = range(len(rows))
    ax_cov.bar(x, coverage, color=colors)
    ax_cov.set_ylabel("coverage")
    ax_cov.set_ylim(0, 1.05)
    ax_cov.set_title(f"Counterfactual assessment {doc['assessment_id']} (red = deployed)")
    ax_fpr.bar(x, fpr, color=colors)
    ax_fpr.set_ylabel("false positive rate")
    ax_fpr.set_ylim(0, 1.05)
    ax_fpr.set_xticks(list(x))
    ax_fpr.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def event_counts_figure(event_counts: dict[str, int], path: str | Path) -> Path:
    """Bar chart of log volume per action id."""
    path = Path(path)
    ids = sorted(event_counts, key=lambda a: int(a[1:]))
    counts = [event_counts[a] for a in ids]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.45 * len(ids) + 2.0), 3.5))
    ax.bar(range(len(ids)), counts, color="#2ca02c")
    ax.set_xticks(range(len(ids)))
    ax.set_xticklabels(ids, rotation=0, fontsize=8)
    ax.set_ylabel("events")
    ax.set_title("Audit log volume by action")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
