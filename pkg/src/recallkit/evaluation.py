"""Offline comparison of trigger matching against recall-vector matching.

Quantifies what the recall step changes: for one trigger, which history items
a plain threshold scan would pick versus which ones the expanded recall
vector picks, as set overlap plus per-item distance movement. The sweep runs
the same comparison across a grid of asymptotic-kernel deltas, which
interpolates from pure trigger matching (delta 0) to full co-occurrence
recall.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .cooccurrence import asymptotic
from .recall import L2, Normalizer, RecallRequest, recall_items
from .relation import RelationMatrix
from .store import UserHistory
from .vectors import ItemVector, Metric, distance, neighborhood


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    """Set overlap |A & B| / |A | B|; two empty sets count as identical (1)."""
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


@dataclass(frozen=True)
class DistanceShift:
    item_id: str
    to_trigger: float
    to_recall: float


@dataclass
class ComparisonReport:
    """How the recall vector changed the selection for one trigger."""

    trigger_id: str
    epsilon: float
    epsilon_prime: float
    set_trigger: list[str]
    set_recall: list[str]
    jaccard: float
    size_delta: int
    distance_shift: list[DistanceShift]

    def to_dict(self) -> dict:
        return {
            "trigger_id": self.trigger_id,
            "epsilon": self.epsilon,
            "epsilon_prime": self.epsilon_prime,
            "set_trigger": self.set_trigger,
            "set_recall": self.set_recall,
            "jaccard": self.jaccard,
            "size_delta": self.size_delta,
            "distance_shift": [
                {"item_id": s.item_id, "to_trigger": s.to_trigger, "to_recall": s.to_recall}
                for s in self.distance_shift
            ],
        }


def compare_trigger_vs_recall(
    trigger: ItemVector,
    history: UserHistory,
    state: RelationMatrix,
    *,
    epsilon: float,
    epsilon_prime: float,
    metric: Metric = Metric.COSINE,
    normalizer: Normalizer = L2,
    subtract_diagonal: bool = False,
    exclude_trigger: bool = True,
) -> ComparisonReport:
    """Select once with the raw trigger at epsilon, once with the recall
    vector at epsilon_prime, over the same candidates, and report the gap.

    Sets are listed sorted by item id; the distance shift covers every
    candidate so the full geometry is visible, not just the members.
    """
    request = RecallRequest(
        user_id=history.user_id,
        trigger=trigger,
        epsilon=epsilon_prime,
        metric=metric,
        normalizer=normalizer,
        subtract_diagonal=subtract_diagonal,
        exclude_trigger=exclude_trigger,
    )
    result = recall_items(request, history, state)

    events = history.latest_by_item()
    if exclude_trigger:
        events = [e for e in events if e.item.item_id != trigger.item_id]
    candidates = [e.item for e in events]

    set_trigger = sorted(item_id for item_id, _ in neighborhood(trigger, epsilon, candidates, metric))
    set_recall = sorted(r.item_id for r in result.recalled)
    shift = [
        DistanceShift(
            item_id=item.item_id,
            to_trigger=distance(metric, trigger, item),
            to_recall=distance(metric, result.recall_vector, item),
        )
        for item in sorted(candidates, key=lambda it: it.item_id)
    ]
    return ComparisonReport(
        trigger_id=trigger.item_id,
        epsilon=float(epsilon),
        epsilon_prime=float(epsilon_prime),
        set_trigger=set_trigger,
        set_recall=set_recall,
        jaccard=jaccard(set_trigger, set_recall),
        size_delta=len(set_recall) - len(set_trigger),
        distance_shift=shift,
    )


def delta_sweep(
    trigger: ItemVector,
    history: UserHistory,
    deltas: Sequence[float],
    *,
    epsilon: float,
    epsilon_prime: float,
    metric: Metric = Metric.COSINE,
    normalizer: Normalizer = L2,
    subtract_diagonal: bool = False,
    exclude_trigger: bool = True,
    n_features: int | None = None,
) -> list[tuple[float, ComparisonReport]]:
    """One comparison per delta, each against a matrix rebuilt from scratch.

    Deltas must be ascending and non-negative. The delta is an evaluation
    knob, not production state, so the matrix is batch-built per row rather
    than snapshotted anywhere.
    """
    cleaned: list[float] = []
    for d in deltas:
        d = float(d)
        if not d >= 0.0:
            raise ValueError(f"deltas must be >= 0, got {d!r}")
        if cleaned and d < cleaned[-1]:
            raise ValueError(f"deltas must be sorted ascending, got {d!r} after {cleaned[-1]!r}")
        cleaned.append(d)
    rows: list[tuple[float, ComparisonReport]] = []
    items = history.items()
    for d in cleaned:
        state = RelationMatrix.from_history(items, asymptotic(d), n_features)
        rows.append(
            (
                d,
                compare_trigger_vs_recall(
                    trigger,
                    history,
                    state,
                    epsilon=epsilon,
                    epsilon_prime=epsilon_prime,
                    metric=metric,
                    normalizer=normalizer,
                    subtract_diagonal=subtract_diagonal,
                    exclude_trigger=exclude_trigger,
                ),
            )
        )
    return rows
