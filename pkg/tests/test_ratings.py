from __future__ import annotations

import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from explbench.ratings import (
    MergedRating,
    RatingRecord,
    agreement,
    load_ratings,
    merge_ratings,
    pooled_agreement,
    rater_pairs,
    rating_distribution,
    save_ratings,
)

from reference import kappa_direct


def rec(q, f, rater, rating):
    return RatingRecord(question_id=q, fact_id=f, rater_id=rater, rating=rating)


def records_from_pairs(pairs, rater_a="a", rater_b="b"):
    """One co-rated item per (rating_a, rating_b) pair."""
    records = []
    for i, (ra, rb) in enumerate(pairs):
        records.append(rec("Q1", f"f{i:04d}", rater_a, ra))
        records.append(rec("Q1", f"f{i:04d}", rater_b, rb))
    return records


class TestMerge:
    def test_ceil_of_mean(self):
        merged = merge_ratings([rec("Q1", "f1", "a", 1), rec("Q1", "f1", "b", 2)])
        assert merged[("Q1", "f1")].tr == 2

    def test_identity(self):
        merged = merge_ratings([rec("Q1", "f1", "a", 3), rec("Q1", "f1", "b", 3)])
        assert merged[("Q1", "f1")].tr == 3

    def test_single_rater(self):
        merged = merge_ratings([rec("Q1", "f1", "a", 2)])
        assert merged[("Q1", "f1")] == MergedRating("Q1", "f1", tr=2, rater_count=1)

    def test_boundary_two_three(self):
        merged = merge_ratings([rec("Q1", "f1", "a", 2), rec("Q1", "f1", "b", 3)])
        assert merged[("Q1", "f1")].tr == 3

    def test_duplicate_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            merge_ratings([rec("Q1", "f1", "a", 1), rec("Q1", "f1", "a", 2)])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="rating"):
            rec("Q1", "f1", "a", 5)

    @given(st.lists(st.integers(min_value=0, max_value=3), min_size=1, max_size=8))
    def test_permutation_invariance(self, ratings):
        def merge_in_order(values):
            records = [rec("Q", "f", f"r{i}", v) for i, v in enumerate(values)]
            return merge_ratings(records)[("Q", "f")].tr

        shuffled = ratings[:]
        random.Random(0).shuffle(shuffled)
        assert merge_in_order(ratings) == merge_in_order(shuffled)

    @given(st.lists(st.integers(min_value=0, max_value=3), min_size=1, max_size=8))
    def test_matches_float_ceil(self, ratings):
        records = [rec("Q", "f", f"r{i}", v) for i, v in enumerate(ratings)]
        tr = merge_ratings(records)[("Q", "f")].tr
        assert tr == math.ceil(sum(ratings) / len(ratings))
        assert 0 <= tr <= 3


class TestAgreement:
    def test_perfect(self):
        records = records_from_pairs([(i % 4, i % 4) for i in range(10)])
        report = agreement(records, "a", "b")
        assert report.cohen_kappa == pytest.approx(1.0)
        assert report.percent_agreement == 1.0
        assert report.n_items == 10

    def test_chance_level_two_categories(self):
        # Balanced 2-category design with p_o = 0.5 and p_e = 0.5.
        pairs = [(0, 0), (0, 3), (3, 0), (3, 3)] * 5
        report = agreement(records_from_pairs(pairs), "a", "b")
        assert report.percent_agreement == pytest.approx(0.5)
        assert report.cohen_kappa == pytest.approx(0.0)

    def test_hand_counted_confusion_fixture(self):
        # 20 items; matrix rows = rater a, cols = rater b.
        matrix = [
            [3, 1, 0, 0],
            [1, 4, 1, 0],
            [0, 1, 5, 1],
            [0, 0, 1, 2],
        ]
        pairs = [(i, j) for i in range(4) for j in range(4) for _ in range(matrix[i][j])]
        report = agreement(records_from_pairs(pairs), "a", "b")
        expected_kappa, expected_po = kappa_direct(matrix)
        assert report.cohen_kappa == pytest.approx(expected_kappa, abs=1e-12)
        assert report.percent_agreement == pytest.approx(expected_po, abs=1e-12)
        assert report.per_pair_counts == tuple(tuple(row) for row in matrix)

    def test_matrix_sums(self):
        pairs = [(0, 1), (1, 1), (2, 3), (3, 3), (2, 2)]
        report = agreement(records_from_pairs(pairs), "a", "b")
        assert sum(sum(row) for row in report.per_pair_counts) == report.n_items

    def test_within_one_fraction(self):
        # Disagreements: (0,1) within one, (0,3) not -> 0.5.
        pairs = [(2, 2), (0, 1), (0, 3)]
        report = agreement(records_from_pairs(pairs), "a", "b")
        assert report.within_one_fraction == pytest.approx(0.5)

    def test_within_one_vacuous(self):
        report = agreement(records_from_pairs([(1, 1), (2, 2)]), "a", "b")
        assert report.within_one_fraction == 1.0

    def test_no_co_rated_items(self):
        records = [rec("Q1", "f1", "a", 1), rec("Q1", "f2", "b", 1)]
        with pytest.raises(ValueError, match="no co-rated"):
            agreement(records, "a", "b")

    def test_kappa_range_random(self):
        rng = random.Random(13)
        for _ in range(50):
            pairs = [(rng.randint(0, 3), rng.randint(0, 3)) for _ in range(rng.randint(2, 40))]
            report = agreement(records_from_pairs(pairs), "a", "b")
            if report.kappa_defined:
                assert -1.0 - 1e-12 <= report.cohen_kappa <= 1.0 + 1e-12
            assert (report.cohen_kappa == pytest.approx(1.0)) == (
                report.percent_agreement == 1.0
            ) or not report.kappa_defined

    def test_relabeling_invariance(self):
        # Permuting categories identically for both raters preserves p_o.
        perm = [2, 0, 3, 1]
        pairs = [(0, 1), (1, 1), (2, 3), (3, 3), (2, 2), (0, 0)]
        relabeled = [(perm[a], perm[b]) for a, b in pairs]
        r1 = agreement(records_from_pairs(pairs), "a", "b")
        r2 = agreement(records_from_pairs(relabeled), "a", "b")
        assert r1.percent_agreement == r2.percent_agreement

    def test_linear_weighted_perfect(self):
        records = records_from_pairs([(i % 4, i % 4) for i in range(8)])
        report = agreement(records, "a", "b", weights="linear")
        assert report.cohen_kappa == pytest.approx(1.0)
        assert report.weights == "linear"

    def test_pooled_and_pairs(self):
        records = [
            rec("Q1", "f1", "a", 1),
            rec("Q1", "f1", "b", 1),
            rec("Q1", "f1", "c", 2),
            rec("Q1", "f2", "a", 0),
            rec("Q1", "f2", "b", 0),
        ]
        assert rater_pairs(records) == [("a", "b"), ("a", "c"), ("b", "c")]
        pooled = pooled_agreement(records)
        # f1 contributes (a,b), (a,c), (b,c); f2 contributes (a,b): 4 pairs.
        assert pooled.n_items == 4
        assert pooled.rater_a == "pooled"


class TestDistribution:
    def test_tiny_fixture(self, questions):
        merged = {
            ("Q1", "K1"): MergedRating("Q1", "K1", tr=3, rater_count=2),
            ("Q1", "P2"): MergedRating("Q1", "P2", tr=0, rater_count=2),
        }
        table = rating_distribution(merged, questions)
        assert table.gold == (0, 0, 0, 1)
        assert table.not_gold == (1, 0, 0, 0)
        assert table.total == 2

    def test_totals_match_merged_count(self, questions):
        rng = random.Random(5)
        facts = ["K1", "K2", "K5", "P1", "P2", "P3"]
        merged = {}
        for q in ("Q1", "Q2"):
            for f in facts:
                if rng.random() < 0.8:
                    merged[(q, f)] = MergedRating(q, f, tr=rng.randint(0, 3), rater_count=1)
        table = rating_distribution(merged, questions)
        assert table.total == len(merged)

    def test_increase_row_arithmetic(self):
        # The not-gold/gold ratio for the mid grades, as a rounded percent.
        from explbench.ratings import DistributionTable

        table = DistributionTable(gold=(315, 2846, 9063, 8579), not_gold=(24795, 36962, 36399, 7245))
        assert table.increase_percent(1) == 1299
        assert table.increase_percent(2) == 402
        assert table.increase_percent(3) == 84

    def test_increase_undefined_for_empty_gold(self):
        from explbench.ratings import DistributionTable

        table = DistributionTable(gold=(0, 1, 1, 1), not_gold=(5, 5, 5, 5))
        assert table.increase_percent(0) is None

    def test_unknown_question_rejected(self, questions):
        merged = {("QX", "K1"): MergedRating("QX", "K1", tr=1, rater_count=1)}
        with pytest.raises(ValueError, match="QX"):
            rating_distribution(merged, questions)


def test_ratings_jsonl_round_trip(tmp_path):
    records = [
        RatingRecord("Q1", "f1", "alice", 3, "2024-05-01T10:00:00"),
        RatingRecord("Q1", "f2", "bob", 0, "2024-05-01T10:01:00"),
    ]
    path = tmp_path / "ratings.jsonl"
    save_ratings(records, path)
    assert load_ratings(path) == records
