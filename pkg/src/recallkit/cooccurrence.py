"""Per-item co-occurrence kernels.

A kernel scores how strongly feature j counts as co-occurring with feature i
inside a single item vector x. Three variants:

    binary          1 if both x_i and x_j are nonzero, else 0
    proportional    x_j / x_i if x_i is nonzero, else 0
    asymptotic(d)   1 on the diagonal (x_i nonzero), d off it when both
                    weights are nonzero, else 0

The asymptotic kernel exists to interpolate between plain trigger matching
(d = 0 reduces the relation matrix to the identity on seen features) and full
co-occurrence recall, which makes it the natural probe for side-by-side
comparisons in the evaluation harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .vectors import ItemVector, SparseVector

_KIND_NAMES = ("binary", "proportional", "asymptotic")


@dataclass(frozen=True)
class CooccurrenceKind:
    """Selects the co-occurrence kernel; ``delta`` only applies to asymptotic."""

    name: str
    delta: float | None = None

    def __post_init__(self) -> None:
        if self.name not in _KIND_NAMES:
            valid = ", ".join(_KIND_NAMES)
            raise ValueError(f"unknown co-occurrence kind {self.name!r} (expected one of: {valid})")
        if self.name == "asymptotic":
            if self.delta is None:
                raise ValueError("asymptotic kind requires a delta parameter")
            object.__setattr__(self, "delta", float(self.delta))
            if not math.isfinite(self.delta) or self.delta < 0.0:
                raise ValueError(f"asymptotic delta must be finite and >= 0, got {self.delta!r}")
        elif self.delta is not None:
            raise ValueError(f"{self.name} kind takes no delta parameter")

    def token(self) -> str:
        """Canonical string form, the same one the command line accepts."""
        if self.name == "asymptotic":
            return f"asymptotic:{self.delta!r}"
        return self.name

    @classmethod
    def parse(cls, token: str) -> "CooccurrenceKind":
        """Parse ``binary``, ``proportional`` or ``asymptotic:<delta>``."""
        name, sep, arg = token.strip().partition(":")
        name = name.lower()
        if name != "asymptotic":
            if sep:
                raise ValueError(f"{name!r} takes no parameter")
            return cls(name)
        if not sep or not arg:
            raise ValueError("asymptotic kind needs a delta, e.g. asymptotic:0.1")
        try:
            delta = float(arg)
        except ValueError:
            raise ValueError(f"bad asymptotic delta {arg!r}") from None
        return cls("asymptotic", delta)

    def __str__(self) -> str:
        return self.token()


BINARY = CooccurrenceKind("binary")
PROPORTIONAL = CooccurrenceKind("proportional")


def asymptotic(delta: float) -> CooccurrenceKind:
    return CooccurrenceKind("asymptotic", float(delta))


def _pair_value(kind: CooccurrenceKind, xi: float, xj: float, diagonal: bool) -> float:
    # Kernels see only the two scalar weights (and whether i == j), never the
    # whole vector, so new kinds cannot accidentally depend on other entries.
    if kind.name == "binary":
        return 1.0 if xi != 0.0 and xj != 0.0 else 0.0
    if kind.name == "proportional":
        return xj / xi if xi != 0.0 else 0.0
    # asymptotic
    if xi == 0.0:
        return 0.0
    if diagonal:
        return 1.0
    return kind.delta if xj != 0.0 else 0.0


def cooccur(kind: CooccurrenceKind, x: ItemVector, i: int, j: int) -> float:
    """Co-occurrence score of feature ``j`` given feature ``i`` within ``x``.

    Zero is the universal "no occurrence" answer; out-of-support indices are
    simply weight 0, never an error.
    """
    xi = x.weights.get(i, 0.0)
    xj = x.weights.get(j, 0.0)
    return _pair_value(kind, xi, xj, i == j)


def cooccur_row(kind: CooccurrenceKind, x: ItemVector, i: int) -> SparseVector:
    """All nonzero scores {j: cooccur(kind, x, i, j)} for one row ``i``.

    Requires x_i != 0 (callers iterate the item's support); scores can only
    be nonzero at j = i or where x_j != 0, so only x's support is scanned.
    """
    xi = x.weights.get(i, 0.0)
    assert xi != 0.0, f"cooccur_row requires x[{i}] != 0"
    row: SparseVector = {}
    for j, xj in x.weights.items():
        value = _pair_value(kind, xi, xj, i == j)
        if value != 0.0:
            row[j] = value
    return row
