import json
import random

import pytest

from recallkit import (
    BINARY,
    HistoryEvent,
    ItemVector,
    RelationMatrix,
    UserHistory,
    asymptotic,
    compare_trigger_vs_recall,
    delta_sweep,
    jaccard,
)

# Frozen by tests/oracles.py.
D_RECALLED = 0.1339745962155613
D_EXCLUDED = 0.4522774424948338
D_RAW = 0.29289321881345254


class TestJaccard:
    def test_equal_nonempty_is_one(self):
        assert jaccard({"a", "b"}, {"b", "a"}) == 1.0

    def test_disjoint_nonempty_is_zero(self):
        assert jaccard({"a"}, {"b"}) == 0.0

    def test_partial_overlap(self):
        assert jaccard({"a", "b"}, {"b", "c"}) == pytest.approx(1.0 / 3.0)

    def test_both_empty_is_one(self):
        assert jaccard(set(), set()) == 1.0

    def test_one_empty_is_zero(self):
        assert jaccard(set(), {"a"}) == 0.0

    def test_symmetric(self):
        rng = random.Random(1)
        pool = [f"x{k}" for k in range(10)]
        for _ in range(50):
            a = set(rng.sample(pool, rng.randint(0, 10)))
            b = set(rng.sample(pool, rng.randint(0, 10)))
            assert jaccard(a, b) == jaccard(b, a)
            assert (jaccard(a, b) == 1.0) == (a == b)

    def test_accepts_any_iterable(self):
        assert jaccard(["a", "a", "b"], ("b", "a")) == 1.0


class TestCompare:
    def test_worked_fixture(self, items_abc, history_abc, trigger_t):
        state = RelationMatrix.from_history(items_abc, BINARY)
        report = compare_trigger_vs_recall(
            trigger_t, history_abc, state, epsilon=0.2, epsilon_prime=0.2
        )
        assert report.set_trigger == []
        assert report.set_recall == ["a", "b"]
        assert report.jaccard == 0.0
        assert report.size_delta == 2
        shifts = {s.item_id: s for s in report.distance_shift}
        assert set(shifts) == {"a", "b", "c"}
        assert shifts["a"].to_trigger == pytest.approx(D_RAW, abs=1e-12)
        assert shifts["a"].to_recall == pytest.approx(D_RECALLED, abs=1e-12)
        assert shifts["c"].to_trigger == pytest.approx(1.0, abs=1e-12)
        assert shifts["c"].to_recall == pytest.approx(D_EXCLUDED, abs=1e-12)

    def test_asymptotic_zero_with_matching_thresholds_agrees(self, items_abc, history_abc):
        trigger = ItemVector("t", {0: 1.0, 1: 0.5})  # support within history support
        state = RelationMatrix.from_history(items_abc, asymptotic(0.0))
        report = compare_trigger_vs_recall(
            trigger, history_abc, state, epsilon=0.35, epsilon_prime=0.35
        )
        assert report.jaccard == 1.0
        assert report.set_trigger == report.set_recall

    def test_empty_history(self, trigger_t):
        history = UserHistory("u")
        report = compare_trigger_vs_recall(
            trigger_t, history, RelationMatrix(BINARY), epsilon=0.2, epsilon_prime=0.2
        )
        assert report.set_trigger == [] and report.set_recall == []
        assert report.jaccard == 1.0
        assert report.distance_shift == []

    def test_trigger_excluded_from_both_sides(self, items_abc):
        trigger = ItemVector("a", {0: 1.0, 1: 1.0})
        history = UserHistory("u", [HistoryEvent(it, ts) for ts, it in enumerate(items_abc, 1)])
        state = RelationMatrix.from_history(items_abc, BINARY)
        report = compare_trigger_vs_recall(trigger, history, state, epsilon=2.0, epsilon_prime=2.0)
        assert "a" not in report.set_trigger
        assert "a" not in report.set_recall
        assert all(s.item_id != "a" for s in report.distance_shift)

    def test_report_dict_is_deterministic(self, items_abc, history_abc, trigger_t):
        def once():
            state = RelationMatrix.from_history(items_abc, BINARY)
            report = compare_trigger_vs_recall(
                trigger_t, history_abc, state, epsilon=0.2, epsilon_prime=0.3
            )
            return json.dumps(report.to_dict())

        assert once() == once()


class TestDeltaSweep:
    def test_zero_row_matches_direct_compare(self, items_abc, history_abc, trigger_t):
        rows = delta_sweep(trigger_t, history_abc, [0.0, 0.5], epsilon=0.2, epsilon_prime=0.2)
        assert [d for d, _ in rows] == [0.0, 0.5]
        direct = compare_trigger_vs_recall(
            trigger_t,
            history_abc,
            RelationMatrix.from_history(items_abc, asymptotic(0.0)),
            epsilon=0.2,
            epsilon_prime=0.2,
        )
        assert rows[0][1].to_dict() == direct.to_dict()

    def test_zero_row_with_support_condition_has_full_overlap(self, items_abc, history_abc):
        trigger = ItemVector("t", {0: 1.0})
        rows = delta_sweep(trigger, history_abc, [0.0], epsilon=0.4, epsilon_prime=0.4)
        assert rows[0][1].jaccard == 1.0

    def test_rows_report_interpolation(self, items_abc, history_abc, trigger_t):
        rows = delta_sweep(
            trigger_t, history_abc, [0.0, 0.5, 1.0], epsilon=0.2, epsilon_prime=0.2
        )
        # delta=1 makes every stored pair weight 1, same as binary here
        assert rows[-1][1].set_recall == ["a", "b"]
        assert rows[0][1].set_recall == []

    def test_empty_deltas(self, history_abc, trigger_t):
        assert delta_sweep(trigger_t, history_abc, [], epsilon=0.2, epsilon_prime=0.2) == []

    def test_unsorted_deltas_rejected(self, history_abc, trigger_t):
        with pytest.raises(ValueError, match="ascending"):
            delta_sweep(trigger_t, history_abc, [0.5, 0.1], epsilon=0.2, epsilon_prime=0.2)

    def test_negative_delta_rejected(self, history_abc, trigger_t):
        with pytest.raises(ValueError, match=">= 0"):
            delta_sweep(trigger_t, history_abc, [-0.1, 0.5], epsilon=0.2, epsilon_prime=0.2)

    def test_state_built_per_row_from_full_multiset(self, items_abc, trigger_t):
        # duplicate events must feed the per-delta matrices
        events = [HistoryEvent(items_abc[0], 1), HistoryEvent(items_abc[0], 2), HistoryEvent(items_abc[1], 3)]
        history = UserHistory("u", events)
        rows = delta_sweep(trigger_t, history, [0.3], epsilon=0.5, epsilon_prime=0.5)
        assert rows[0][1].distance_shift  # runs fine with duplicates
