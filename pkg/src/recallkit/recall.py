"""The two-step recall operation.

Step one expands a trigger item through the user's relation matrix and
normalizes the product into the item space (the recall vector, a stand-in for
whatever the trigger brings to the user's mind). Step two selects the near
items to that vector from the user's own recommendation history, by distance
threshold or top-k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .errors import ConfigurationError
from .relation import RelationMatrix
from .vectors import ItemVector, Metric, SparseVector, nearest, neighborhood

if TYPE_CHECKING:
    from .store import UserHistory

_NORMALIZER_NAMES = ("identity", "l2", "sigmoid")


@dataclass(frozen=True)
class Normalizer:
    """Map from the raw matrix product back into the item space.

    ``identity`` passes the vector through, ``l2`` rescales to unit length
    (zero stays zero), ``sigmoid`` applies 1 / (1 + exp(-a (z - b)))
    elementwise. The sigmoid touches only stored nonzero coordinates by
    default; mapping every coordinate would densify the vector, since a
    sigmoid of 0 is not 0. Set ``dense=True`` to get that literal behaviour
    anyway for fidelity experiments.
    """

    name: str
    a: float = 1.0
    b: float = 0.0
    dense: bool = False

    def __post_init__(self) -> None:
        if self.name not in _NORMALIZER_NAMES:
            valid = ", ".join(_NORMALIZER_NAMES)
            raise ValueError(f"unknown normalizer {self.name!r} (expected one of: {valid})")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if self.name == "sigmoid":
            if not math.isfinite(self.a) or self.a <= 0.0:
                raise ValueError(f"sigmoid slope a must be finite and > 0, got {self.a!r}")
            if not math.isfinite(self.b):
                raise ValueError(f"sigmoid midpoint b must be finite, got {self.b!r}")
        elif self.dense:
            raise ValueError(f"dense mode only applies to the sigmoid normalizer, not {self.name!r}")

    def token(self) -> str:
        if self.name == "sigmoid":
            return f"sigmoid:{self.a!r}:{self.b!r}"
        return self.name

    @classmethod
    def parse(cls, token: str, dense: bool = False) -> "Normalizer":
        """Parse ``identity``, ``l2``, or ``sigmoid[:<a>[:<b>]]``."""
        parts = token.strip().lower().split(":")
        name = parts[0]
        if name != "sigmoid":
            if len(parts) > 1:
                raise ValueError(f"{name!r} takes no parameters")
            return cls(name)
        if len(parts) > 3:
            raise ValueError("sigmoid takes at most two parameters: sigmoid:<a>:<b>")
        try:
            a = float(parts[1]) if len(parts) > 1 else 1.0
            b = float(parts[2]) if len(parts) > 2 else 0.0
        except ValueError:
            raise ValueError(f"bad sigmoid parameters in {token!r}") from None
        return cls("sigmoid", a, b, dense)

    def __str__(self) -> str:
        return self.token()


IDENTITY = Normalizer("identity")
L2 = Normalizer("l2")


def sigmoid(a: float = 1.0, b: float = 0.0, dense: bool = False) -> Normalizer:
    return Normalizer("sigmoid", a, b, dense)


def _sigmoid_value(z: float, a: float, b: float) -> float:
    u = -a * (z - b)
    # exp overflows past ~709; the limit values are exact there anyway.
    if u > 709.0:
        return 0.0
    if u < -709.0:
        return 1.0
    return 1.0 / (1.0 + math.exp(u))


def normalize(kind: Normalizer, vec: SparseVector, size: int | None = None) -> SparseVector:
    """Apply a normalizer to a sparse vector, keeping only nonzero entries.

    ``size`` is the dictionary size, needed only by the dense sigmoid (it
    must evaluate every coordinate, stored or not).
    """
    if kind.name == "identity":
        return dict(vec)
    if kind.name == "l2":
        norm = math.sqrt(math.fsum(w * w for w in vec.values()))
        if norm == 0.0:
            return dict(vec)
        return {j: w / norm for j, w in vec.items()}
    # sigmoid
    if kind.dense:
        if size is None:
            raise ConfigurationError("dense sigmoid needs the dictionary size, none is known")
        out = {j: _sigmoid_value(vec.get(j, 0.0), kind.a, kind.b) for j in range(size)}
    else:
        out = {j: _sigmoid_value(w, kind.a, kind.b) for j, w in vec.items()}
    return {j: v for j, v in out.items() if v != 0.0}


def recall_vector(
    state: RelationMatrix,
    trigger: ItemVector,
    normalizer: Normalizer = L2,
    subtract_diagonal: bool = False,
) -> SparseVector:
    """Expand ``trigger`` through the relation matrix and normalize.

    Features of the trigger that never occurred in the history have empty
    matrix rows, so a fully unseen trigger yields the zero vector.
    """
    raw = state.apply(trigger, subtract_diagonal)
    return normalize(normalizer, raw, size=state.n_features)


@dataclass
class RecallRequest:
    """One recall query; exactly one of ``epsilon`` / ``top_k`` must be set."""

    user_id: str
    trigger: ItemVector
    epsilon: float | None = None
    top_k: int | None = None
    metric: Metric = Metric.COSINE
    normalizer: Normalizer = L2
    subtract_diagonal: bool = False
    exclude_trigger: bool = True

    def __post_init__(self) -> None:
        if (self.epsilon is None) == (self.top_k is None):
            raise ValueError("exactly one of epsilon and top_k must be set")
        if self.epsilon is not None:
            self.epsilon = float(self.epsilon)
            if not self.epsilon >= 0.0:
                raise ValueError(f"epsilon must be >= 0, got {self.epsilon!r}")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")


@dataclass(frozen=True)
class RecalledItem:
    item_id: str
    distance: float
    ts: int


@dataclass
class RecallResult:
    """Recalled items plus the intermediate recall vector that selected them."""

    trigger_id: str
    recall_vector: SparseVector
    recalled: list[RecalledItem] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "trigger_id": self.trigger_id,
            "recall_vector": {str(j): self.recall_vector[j] for j in sorted(self.recall_vector)},
            "recalled": [
                {"item_id": r.item_id, "distance": r.distance, "ts": r.ts} for r in self.recalled
            ],
        }


def recall_items(request: RecallRequest, history: "UserHistory", state: RelationMatrix) -> RecallResult:
    """Run the full two-step recall against one user's history.

    ``state`` must have been built from exactly the events in ``history``.
    Repeated recommendations of one item count once here, represented by
    their latest event (the matrix still averages over every event). The
    trigger itself is dropped from the candidates by item id unless the
    request says otherwise. An empty history is an empty result, not an
    error.
    """
    if state.items_absorbed != len(history.events):
        raise ConfigurationError(
            f"matrix state covers {state.items_absorbed} events but the history has "
            f"{len(history.events)}; rebuild the matrix from this history"
        )
    r = recall_vector(state, request.trigger, request.normalizer, request.subtract_diagonal)
    events = history.latest_by_item()
    if request.exclude_trigger:
        events = [e for e in events if e.item.item_id != request.trigger.item_id]
    candidates = [e.item for e in events]
    ts_by_id = {e.item.item_id: e.ts for e in events}
    if request.top_k is not None:
        pairs = nearest(r, request.top_k, candidates, request.metric)
    else:
        pairs = neighborhood(r, request.epsilon, candidates, request.metric)
    recalled = [RecalledItem(item_id, d, ts_by_id[item_id]) for item_id, d in pairs]
    return RecallResult(trigger_id=request.trigger.item_id, recall_vector=r, recalled=recalled)
