import numpy as np
import pytest

from pscs import evaluate as ev
from pscs.evaluate import (EvalReport, PerQuery, evaluate_checkpoint,
                           length_breakdown, mrr, random_floor,
                           success_rate_at_k, timing_report)


def oracle_success_rate(ranks, k):
    """Spreadsheet-style: one indicator column, then an average."""
    hits = 0.0
    for r in ranks:
        hits += 1.0 if (r is not None and r <= k) else 0.0
    return hits / len(ranks)


def oracle_mrr(ranks, k):
    total = 0.0
    for r in ranks:
        total += (1.0 / r) if (r is not None and r <= k) else 0.0
    return total / len(ranks)


class TestSuccessRate:
    def test_worked_example(self):
        assert success_rate_at_k([1, 3, None, 12], 10) == 0.5

    def test_all_rank_one(self):
        for k in (1, 5, 10):
            assert success_rate_at_k([1, 1, 1], k) == 1.0

    def test_k_zero_is_zero(self):
        assert success_rate_at_k([1, 2, 3], 0) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            success_rate_at_k([], 10)


class TestMrr:
    def test_worked_example(self):
        got = mrr([1, 2, 4], 10)
        assert abs(got - (1 + 0.5 + 0.25) / 3) < 1e-12

    def test_single_rank_one(self):
        assert mrr([1], 10) == 1.0

    def test_rank_beyond_k_contributes_zero(self):
        assert mrr([11], 10) == 0.0
        assert mrr([10], 10) == 0.1

    def test_missing_counts_zero(self):
        assert mrr([None, 1], 10) == 0.5


class TestAgainstOracle:
    def test_hundred_random_rank_vectors(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(1, 40))
            ranks = []
            for _ in range(n):
                if rng.random() < 0.2:
                    ranks.append(None)
                else:
                    ranks.append(int(rng.integers(1, 30)))
            for k in (1, 5, 10, 25):
                assert abs(success_rate_at_k(ranks, k)
                           - oracle_success_rate(ranks, k)) < 1e-12
                assert abs(mrr(ranks, k) - oracle_mrr(ranks, k)) < 1e-12

    def test_monotonicity_in_k(self):
        rng = np.random.default_rng(7)
        ranks = [int(r) for r in rng.integers(1, 50, size=200)]
        values = [success_rate_at_k(ranks, k) for k in range(0, 60)]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))

    def test_mrr_bounded_by_success_rate(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            ranks = [int(r) if r < 40 else None
                     for r in rng.integers(1, 60, size=100)]
            assert mrr(ranks, 10) <= success_rate_at_k(ranks, 10) + 1e-12


class TestRandomFloor:
    def test_closed_form(self):
        sr, floor = random_floor(2000, 10)
        assert abs(sr - 10 / 2000) < 1e-12
        harmonic = sum(1.0 / r for r in range(1, 11))
        assert abs(floor - harmonic / 2000) < 1e-12

    def test_small_pool_saturates(self):
        sr, floor = random_floor(5, 10)
        assert sr == 1.0
        assert abs(floor - sum(1.0 / r for r in range(1, 6)) / 5) < 1e-12

    def test_random_scorer_lands_near_floor(self):
        # empirical check of the closed form with a uniformly random ranker
        rng = np.random.default_rng(3)
        n, trials = 40, 400
        hits, rr = 0.0, 0.0
        for _ in range(trials):
            order = rng.permutation(n)
            rank = int(np.flatnonzero(order == 0)[0]) + 1
            if rank <= 10:
                hits += 1
                rr += 1.0 / rank
        sr_emp, mrr_emp = hits / trials, rr / trials
        sr_want, mrr_want = random_floor(n, 10)
        assert abs(sr_emp - sr_want) < 0.08
        assert abs(mrr_emp - mrr_want) < 0.04


class TestReport:
    def make_report(self, ranks_words):
        per = [PerQuery(query_id=f"q{i}", rank=r, words=w)
               for i, (r, w) in enumerate(ranks_words)]
        ranks = [p.rank for p in per]
        return EvalReport(success_rate={1: success_rate_at_k(ranks, 1),
                                        10: success_rate_at_k(ranks, 10)},
                          mrr=mrr(ranks, 10), per_query=per,
                          timing_ms_per_query=0.5, pool_size=len(per))

    def test_invariants_pass_on_consistent_report(self):
        report = self.make_report([(1, 4), (3, 7), (None, 12), (2, 5)])
        assert report.check_invariants() is None

    def test_invariants_catch_violations(self):
        report = self.make_report([(1, 4), (2, 5)])
        report.success_rate[10] = 0.1   # below SR@1
        assert report.check_invariants() is not None
        report = self.make_report([(1, 4)])
        report.mrr = 1.5
        assert report.check_invariants() is not None

    def test_json_and_table_render(self):
        report = self.make_report([(1, 4), (5, 8)])
        report.breakdown = length_breakdown(report)
        doc = report.to_json()
        assert '"pool_size": 2' in doc
        table = report.table()
        assert "SuccessRate@1" in table and "MRR" in table

    def test_length_breakdown_buckets_and_flags(self):
        rows_in = [(1, 2)] * 12 + [(2, 7)] * 12 + [(None, 12)] * 3 + [(1, 30)] * 2
        report = self.make_report(rows_in)
        rows = length_breakdown(report)
        by_label = {r["bucket"]: r for r in rows}
        assert by_label["1-4"]["queries"] == 12
        assert by_label["1-4"]["low_confidence"] is False
        assert by_label["5-9"]["sr10"] == 1.0
        assert by_label["10-14"]["queries"] == 3
        assert by_label["10-14"]["low_confidence"] is True
        assert by_label["10-14"]["mrr"] == 0.0
        assert by_label["21+"]["queries"] == 2
        assert by_label["15-20"]["queries"] == 0


class TestEvaluateCheckpoint:
    def test_identity_oracle_scores_perfectly(self, monkeypatch):
        """With scores = 1 for the true pair and 0 otherwise, SR@1 = MRR = 1."""
        from pscs import engine as eng
        from pscs.model import AblationConfig, HyperParams

        snips = [type("S", (), {"id": f"s{i}", "query": f"query {i}",
                                "query_words": 2})() for i in range(6)]

        def fake_encode_corpus(snippets, params, hp, ablation, chunk=128):
            return [s.id for s in snippets], np.eye(len(snippets), 8, dtype=np.float32)

        def fake_encode_queries(snippets, params, hp, ablation, chunk=1024):
            return np.eye(len(snippets), 8, dtype=np.float32)

        monkeypatch.setattr(ev.eng, "encode_corpus", fake_encode_corpus)
        monkeypatch.setattr(ev.eng, "encode_queries", fake_encode_queries)
        report = evaluate_checkpoint(snips, params=None, hp=HyperParams(),
                                     ks=(1, 10), ablation=AblationConfig())
        assert report.success_rate[1] == 1.0
        assert report.success_rate[10] == 1.0
        assert report.mrr == 1.0
        assert report.check_invariants() is None

    def test_empty_pool_rejected(self):
        from pscs.model import AblationConfig, HyperParams

        with pytest.raises(ValueError):
            evaluate_checkpoint([], params=None, hp=HyperParams(),
                                ablation=AblationConfig())
