"""Per-user feature relation matrices built from co-occurrence statistics.

The matrix entry for a feature pair (i, j) is the average co-occurrence score
of j over the history items in which i occurs. The state stores raw sums and
occurrence counts instead of the averaged weights: sums accumulate exactly and
commute under reordering, so a single-item update is equivalent to a batch
rebuild, while averaging in place would pick up order-dependent rounding.
Weights are derived on read.

Everything is keyed sparsely. Rows exist only for features seen in at least
one item, and building from an item costs O(nnz(item)^2) regardless of the
dictionary size, which is what makes per-recommendation updates cheap.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Iterator, Mapping
from types import MappingProxyType

from .cooccurrence import CooccurrenceKind, cooccur_row
from .errors import ConfigurationError
from .vectors import ItemVector, SparseVector


class RelationMatrix:
    """Sparse accumulator for one user's feature relation matrix.

    ``n_features`` binds the matrix to a feature dictionary of that size
    (dictionaries grow append-only, so their size identifies their version);
    ``None`` leaves the matrix unbounded and skips id range checks.

    Single writer per instance; readers may share a snapshot freely.
    """

    __slots__ = ("kind", "n_features", "items_absorbed", "_sums", "_counts")

    def __init__(self, kind: CooccurrenceKind, n_features: int | None = None):
        self.kind = kind
        self.n_features = int(n_features) if n_features is not None else None
        self.items_absorbed = 0
        self._sums: dict[int, SparseVector] = {}
        self._counts: dict[int, int] = {}

    @classmethod
    def from_history(
        cls,
        items: Iterable[ItemVector],
        kind: CooccurrenceKind,
        n_features: int | None = None,
    ) -> "RelationMatrix":
        """Batch build: fold every item in order into a fresh state."""
        matrix = cls(kind, n_features)
        for item in items:
            matrix.absorb(item)
        return matrix

    @classmethod
    def restore(
        cls,
        kind: CooccurrenceKind,
        n_features: int | None,
        items_absorbed: int,
        counts: Mapping[int, int],
        sums: Iterable[tuple[int, int, float]],
    ) -> "RelationMatrix":
        """Rebuild a state from raw components, validating its invariants.

        Used by snapshot loading; raises ValueError on anything a well-formed
        state could not contain.
        """
        if items_absorbed < 0:
            raise ValueError(f"items_absorbed must be >= 0, got {items_absorbed}")
        matrix = cls(kind, n_features)
        matrix.items_absorbed = items_absorbed
        for i, c in counts.items():
            if c < 1:
                raise ValueError(f"count for feature {i} must be >= 1, got {c}")
            if c > items_absorbed:
                raise ValueError(f"count {c} for feature {i} exceeds items_absorbed {items_absorbed}")
            matrix._counts[int(i)] = int(c)
        for i, j, s in sums:
            if i not in matrix._counts:
                raise ValueError(f"sum entry ({i}, {j}) has no occurrence count for feature {i}")
            if not math.isfinite(s):
                raise ValueError(f"sum at ({i}, {j}) is not finite")
            if kind.name == "binary" and not (0.0 <= s <= matrix._counts[i]):
                raise ValueError(f"binary sum {s} at ({i}, {j}) outside [0, {matrix._counts[i]}]")
            matrix._sums.setdefault(i, {})[j] = float(s)
        return matrix

    def _check_ids(self, item: ItemVector, what: str) -> None:
        if self.n_features is None:
            return
        for fid in item.weights:
            if fid >= self.n_features:
                raise ConfigurationError(
                    f"{what} {item.item_id!r} uses feature id {fid}, but this matrix "
                    f"is bound to a dictionary of {self.n_features} features"
                )

    def absorb(self, item: ItemVector) -> None:
        """Fold one new item into the state.

        For every feature i in the item's support the occurrence count rises
        by one and row i gains that item's co-occurrence scores. Cost is
        O(nnz(item)^2); an empty item only advances ``items_absorbed``.
        """
        self._check_ids(item, "item")
        for i in item.weights:
            self._counts[i] = self._counts.get(i, 0) + 1
            row = self._sums.setdefault(i, {})
            for j, value in cooccur_row(self.kind, item, i).items():
                if not math.isfinite(value):
                    # A proportional ratio of extreme weights can overflow;
                    # the state (and its snapshots) must stay finite.
                    raise ValueError(
                        f"co-occurrence of features ({i}, {j}) in item {item.item_id!r} "
                        f"is not finite ({value!r})"
                    )
                row[j] = row.get(j, 0.0) + value
        self.items_absorbed += 1

    def weight(self, i: int, j: int) -> float:
        """Averaged relation weight: sum(i, j) / count(i), or 0 if unseen."""
        row = self._sums.get(i)
        if not row:
            return 0.0
        s = row.get(j)
        if s is None:
            return 0.0
        return s / self._counts[i]

    def apply(self, trigger: ItemVector, subtract_diagonal: bool = False) -> SparseVector:
        """Expand a trigger through the matrix: out_j = sum_i weight(i, j) * t_i.

        Only the trigger's support is iterated and only stored rows
        contribute, so the cost is nnz(trigger) times the average row size.
        ``subtract_diagonal`` zeroes the (i, i) contributions, the classical
        associative-memory convention; kept off by default.
        """
        self._check_ids(trigger, "trigger")
        out: SparseVector = {}
        for i, ti in trigger.weights.items():
            row = self._sums.get(i)
            if not row:
                continue
            count = self._counts[i]
            for j, s in row.items():
                if s == 0.0:
                    continue
                if subtract_diagonal and j == i:
                    continue
                out[j] = out.get(j, 0.0) + (s / count) * ti
        # Cancellation can leave exact zeros behind; drop them so the result
        # honours the nonzero-only storage convention.
        return {j: v for j, v in out.items() if v != 0.0}

    @property
    def counts(self) -> Mapping[int, int]:
        return MappingProxyType(self._counts)

    def row(self, i: int) -> Mapping[int, float]:
        return MappingProxyType(self._sums.get(i, {}))

    def iter_sums(self) -> Iterator[tuple[int, int, float]]:
        for i, row in self._sums.items():
            for j, s in row.items():
                yield i, j, s

    def copy(self) -> "RelationMatrix":
        clone = RelationMatrix(self.kind, self.n_features)
        clone.items_absorbed = self.items_absorbed
        clone._counts = dict(self._counts)
        clone._sums = {i: dict(row) for i, row in self._sums.items()}
        return clone

    def max_abs_weight_difference(self, other: "RelationMatrix") -> float:
        """Largest |weight difference| over the union of stored entries."""
        keys = {(i, j) for i, j, _ in self.iter_sums()}
        keys.update((i, j) for i, j, _ in other.iter_sums())
        worst = 0.0
        for i, j in keys:
            diff = abs(self.weight(i, j) - other.weight(i, j))
            if diff > worst:
                worst = diff
        return worst

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RelationMatrix):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.n_features == other.n_features
            and self.items_absorbed == other.items_absorbed
            and self._counts == other._counts
            and self._sums == other._sums
        )

    def __repr__(self) -> str:
        nnz = sum(len(row) for row in self._sums.values())
        return (
            f"RelationMatrix(kind={self.kind.token()}, rows={len(self._sums)}, "
            f"nnz={nnz}, items_absorbed={self.items_absorbed})"
        )
