"""Figure rendering for evaluation reports.

Renders to files only (Agg backend), intended to sit alongside the JSONL or
table output of the eval commands.
"""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .evaluation import ComparisonReport  # noqa: E402


def save_sweep_figure(
    rows: Sequence[tuple[float, ComparisonReport]],
    path: str | Path,
    *,
    epsilon: float,
    epsilon_prime: float,
) -> Path:
    """Overlap and set sizes as functions of the asymptotic delta."""
    path = Path(path)
    deltas = [d for d, _ in rows]
    overlaps = [report.jaccard for _, report in rows]
    recall_sizes = [len(report.set_recall) for _, report in rows]
    trigger_sizes = [len(report.set_trigger) for _, report in rows]

    fig, (ax_overlap, ax_sizes) = plt.subplots(2, 1, sharex=True, figsize=(7.0, 6.0))
    ax_overlap.plot(deltas, overlaps, "o-", color="tab:purple")
    ax_overlap.set_ylabel("Jaccard overlap")
    ax_overlap.set_ylim(-0.05, 1.05)
    ax_overlap.grid(True, alpha=0.3)
    ax_overlap.set_title(
        f"trigger neighborhood (eps={epsilon:g}) vs recall neighborhood (eps'={epsilon_prime:g})"
    )

    ax_sizes.plot(deltas, recall_sizes, "s-", color="tab:orange", label="recall-vector selection")
    ax_sizes.plot(deltas, trigger_sizes, "^--", color="tab:blue", label="raw trigger selection")
    ax_sizes.set_xlabel("asymptotic delta")
    ax_sizes.set_ylabel("items selected")
    ax_sizes.grid(True, alpha=0.3)
    ax_sizes.legend()

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_compare_figure(report: ComparisonReport, path: str | Path) -> Path:
    """Per-item scatter: distance to the trigger vs distance to the recall vector."""
    path = Path(path)
    in_trigger = set(report.set_trigger)
    in_recall = set(report.set_recall)
    groups = {
        "both": ("tab:purple", []),
        "trigger only": ("tab:blue", []),
        "recall only": ("tab:orange", []),
        "neither": ("0.7", []),
    }
    for shift in report.distance_shift:
        if shift.item_id in in_trigger and shift.item_id in in_recall:
            key = "both"
        elif shift.item_id in in_trigger:
            key = "trigger only"
        elif shift.item_id in in_recall:
            key = "recall only"
        else:
            key = "neither"
        groups[key][1].append((shift.to_trigger, shift.to_recall))

    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    for label, (color, points) in groups.items():
        if points:
            xs, ys = zip(*points)
            ax.scatter(xs, ys, s=36, color=color, label=label, alpha=0.85)
    limit = max(
        [report.epsilon, report.epsilon_prime]
        + [max(s.to_trigger, s.to_recall) for s in report.distance_shift],
        default=1.0,
    )
    limit *= 1.05
    ax.plot([0, limit], [0, limit], "k--", alpha=0.4, linewidth=1)
    ax.axvline(report.epsilon, color="tab:blue", linestyle=":", alpha=0.7)
    ax.axhline(report.epsilon_prime, color="tab:orange", linestyle=":", alpha=0.7)
    ax.set_xlim(0, limit)
    ax.set_ylim(0, limit)
    ax.set_xlabel("distance to trigger")
    ax.set_ylabel("distance to recall vector")
    ax.set_title(f"trigger {report.trigger_id!r}: jaccard {report.jaccard:.3f}")
    if any(points for _, points in groups.values()):
        ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
