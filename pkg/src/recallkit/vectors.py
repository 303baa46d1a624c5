"""Sparse weighted feature vectors and exact threshold-neighborhood search.

Items live in an N-dimensional real vector space whose coordinates are named
by a :class:`FeatureDictionary`. Only nonzero weights are ever stored, so all
distance work is proportional to the number of stored entries, not to N.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from enum import Enum

SparseVector = dict[int, float]


class Metric(Enum):
    """Distance functions over item vectors; smaller means nearer.

    Cosine is exposed as a distance (1 - similarity) so both metrics share
    one orientation: values in [0, 2] for cosine, [0, inf) for euclidean.
    """

    EUCLIDEAN = "euclidean"
    COSINE = "cosine"

    @classmethod
    def parse(cls, token: str) -> "Metric":
        try:
            return cls(token.lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown metric {token!r} (expected one of: {valid})") from None


class FeatureDictionary:
    """Bijection between feature names and dense non-negative integer ids.

    Ids are assigned in insertion order and never change, so a dictionary
    serialized and rebuilt from the same name sequence assigns identical ids.
    """

    __slots__ = ("_ids", "_names")

    def __init__(self, names: Iterable[str] = ()):
        self._ids: dict[str, int] = {}
        self._names: list[str] = []
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        """Return the id for ``name``, assigning the next free id if new."""
        fid = self._ids.get(name)
        if fid is None:
            fid = len(self._names)
            self._ids[name] = fid
            self._names.append(name)
        return fid

    def id_of(self, name: str) -> int:
        return self._ids[name]

    def get(self, name: str) -> int | None:
        return self._ids.get(name)

    def name_of(self, fid: int) -> str:
        return self._names[fid]

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def __len__(self) -> int:
        return len(self._names)

    def __contains__(self, name: str) -> bool:
        return name in self._ids

    def __iter__(self):
        return iter(self._names)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureDictionary):
            return NotImplemented
        return self._names == other._names

    def __repr__(self) -> str:
        return f"FeatureDictionary({len(self)} features)"


@dataclass
class ItemVector:
    """One item profile: an opaque id plus its nonzero feature weights.

    Exact zeros are dropped on construction; weights must be finite and ids
    non-negative. Negative weights are legal even though the bundled text
    ingestion never produces them.
    """

    item_id: str
    weights: SparseVector

    def __post_init__(self) -> None:
        cleaned: SparseVector = {}
        for fid, raw in self.weights.items():
            fid = int(fid)
            if fid < 0:
                raise ValueError(f"feature id {fid} is negative")
            w = float(raw)
            if not math.isfinite(w):
                raise ValueError(f"weight for feature {fid} is not finite: {raw!r}")
            if w != 0.0:
                cleaned[fid] = w
        self.weights = cleaned

    def norm(self) -> float:
        return _norm(self.weights)

    def __len__(self) -> int:
        return len(self.weights)


VectorLike = ItemVector | Mapping[int, float]


def _weights(x: VectorLike) -> Mapping[int, float]:
    return x.weights if isinstance(x, ItemVector) else x


def _dot(a: Mapping[int, float], b: Mapping[int, float]) -> float:
    # Iterate the smaller support; fsum makes the result order-independent,
    # which keeps the distance exactly symmetric in its arguments.
    if len(a) > len(b):
        a, b = b, a
    return math.fsum(w * b[i] for i, w in a.items() if i in b)


def _norm(a: Mapping[int, float]) -> float:
    return math.sqrt(math.fsum(w * w for w in a.values()))


def _euclidean(a: Mapping[int, float], b: Mapping[int, float]) -> float:
    # Plain products plus fsum give an exactly symmetric result: swapping the
    # arguments permutes and negates differences but leaves every squared
    # term bit-identical, and fsum is order-independent.
    terms = []
    for i, w in a.items():
        d = w - b.get(i, 0.0)
        terms.append(d * d)
    terms += [w * w for i, w in b.items() if i not in a]
    return math.sqrt(math.fsum(terms))

def _cosine_from_parts(dot: float, norm_a: float, norm_b: float) -> float:
    if norm_a == 0.0 or norm_b == 0.0:
        # A zero vector is maximally unrelated within the usual range rather
        # than an error: recall vectors are legitimately zero when a trigger's
        # features never occurred in the history.
        return 1.0
    d = 1.0 - dot / (norm_a * norm_b)
    # Rounding can push the value a hair outside [0, 2]; clamp it back.
    return min(max(d, 0.0), 2.0)


def _cosine(a: Mapping[int, float], b: Mapping[int, float]) -> float:
    return _cosine_from_parts(_dot(a, b), _norm(a), _norm(b))


def distance(metric: Metric, x: VectorLike, y: VectorLike) -> float:
    """Distance between two sparse vectors under ``metric``.

    Euclidean sums squared differences over the union of supports; cosine is
    1 - dot(x, y) / (|x| |y|), defined as 1 if either vector is zero.
    """
    a, b = _weights(x), _weights(y)
    if metric is Metric.EUCLIDEAN:
        return _euclidean(a, b)
    if metric is Metric.COSINE:
        return _cosine(a, b)
    raise TypeError(f"unknown metric: {metric!r}")


def _scored(query: Mapping[int, float], candidates: Iterable[ItemVector], metric: Metric):
    if metric is Metric.COSINE:
        nq = _norm(query)
        for cand in candidates:
            yield cand.item_id, _cosine_from_parts(_dot(query, cand.weights), nq, _norm(cand.weights))
    elif metric is Metric.EUCLIDEAN:
        for cand in candidates:
            yield cand.item_id, _euclidean(query, cand.weights)
    else:
        raise TypeError(f"unknown metric: {metric!r}")


def neighborhood(
    x: VectorLike,
    epsilon: float,
    candidates: Iterable[ItemVector],
    metric: Metric = Metric.COSINE,
) -> list[tuple[str, float]]:
    """All candidates strictly nearer than ``epsilon`` to ``x``.

    Returns (item_id, distance) pairs sorted by ascending distance, ties
    broken by item_id, so output order is stable across runs and platforms.
    ``epsilon`` = 0 always yields the empty list (the inequality is strict).
    """
    epsilon = float(epsilon)
    if not epsilon >= 0.0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon!r}")
    hits = [(item_id, d) for item_id, d in _scored(_weights(x), candidates, metric) if d < epsilon]
    hits.sort(key=lambda hit: (hit[1], hit[0]))
    return hits


def nearest(
    x: VectorLike,
    k: int,
    candidates: Iterable[ItemVector],
    metric: Metric = Metric.COSINE,
) -> list[tuple[str, float]]:
    """The ``k`` nearest candidates to ``x`` regardless of any threshold."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    hits = sorted(_scored(_weights(x), candidates, metric), key=lambda hit: (hit[1], hit[0]))
    return hits[:k]
