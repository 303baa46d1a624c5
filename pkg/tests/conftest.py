import pytest

from recallkit import HistoryEvent, ItemVector, UserHistory


@pytest.fixture
def items_abc() -> list[ItemVector]:
    """The worked example history: a=(1,1,0), b=(1,0,1), c=(0,2,1)."""
    return [
        ItemVector("a", {0: 1.0, 1: 1.0}),
        ItemVector("b", {0: 1.0, 2: 1.0}),
        ItemVector("c", {1: 2.0, 2: 1.0}),
    ]


@pytest.fixture
def history_abc(items_abc) -> UserHistory:
    events = [HistoryEvent(item, ts) for ts, item in enumerate(items_abc, start=1)]
    return UserHistory(user_id="u", events=events)


@pytest.fixture
def trigger_t() -> ItemVector:
    return ItemVector("t", {0: 1.0})
