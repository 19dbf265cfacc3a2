"""Retrieval evaluation: SuccessRate@k, truncated MRR, breakdowns, timing.

Every test query searches the full test pool; the paired snippet is the
single ground truth. A query whose snippet falls outside the top-k window
contributes 0 to both metrics at that k.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import engine as eng
from .model import AblationConfig, HyperParams, ModelParams

MRR_TRUNCATION = 10
DEFAULT_LENGTH_BUCKETS = ((1, 4), (5, 9), (10, 14), (15, 20))
LOW_CONFIDENCE_BUCKET = 10   # flag buckets with fewer queries than this


@dataclass
class PerQuery:
    query_id: str
    rank: int | None          # 1-based rank of the paired snippet
    words: int                # query length in whitespace words


@dataclass
class EvalReport:
    success_rate: dict                 # k -> fraction
    mrr: float                         # truncated at MRR_TRUNCATION
    per_query: list                    # [PerQuery]
    timing_ms_per_query: float
    breakdown: list = field(default_factory=list)
    pool_size: int = 0

    def check_invariants(self):
        """Return the first violated report invariant, or None."""
        for k, v in self.success_rate.items():
            if not (0.0 <= v <= 1.0):
                return f"SR@{k} out of [0, 1]: {v}"
        ks = sorted(self.success_rate)
        for a, b in zip(ks, ks[1:]):
            if self.success_rate[a] > self.success_rate[b] + 1e-12:
                return f"SR@{a} > SR@{b}"
        if not (0.0 <= self.mrr <= 1.0):
            return f"MRR out of [0, 1]: {self.mrr}"
        anchor = max((k for k in ks if k <= MRR_TRUNCATION), default=None)
        if anchor is not None and anchor == MRR_TRUNCATION \
                and self.mrr > self.success_rate[anchor] + 1e-12:
            return f"MRR {self.mrr} exceeds SR@{anchor}"
        return None

    def to_json(self) -> str:
        doc = {
            "pool_size": self.pool_size,
            "success_rate": {str(k): v for k, v in sorted(self.success_rate.items())},
            "mrr_top_%d" % MRR_TRUNCATION: self.mrr,
            "timing_ms_per_query": self.timing_ms_per_query,
            "per_query": [{"id": p.query_id, "rank": p.rank, "words": p.words}
                          for p in self.per_query],
            "breakdown": self.breakdown,
        }
        return json.dumps(doc, indent=2)

    def table(self) -> str:
        lines = [f"pool size        {self.pool_size}"]
        for k in sorted(self.success_rate):
            lines.append(f"SuccessRate@{k:<4d} {self.success_rate[k]:.4f}")
        lines.append(f"MRR (top-{MRR_TRUNCATION})     {self.mrr:.4f}")
        lines.append(f"search ms/query  {self.timing_ms_per_query:.3f}")
        if self.breakdown:
            lines.append("")
            lines.append("words      queries  SR@10   MRR     note")
            for row in self.breakdown:
                note = "low-confidence" if row["low_confidence"] else ""
                lines.append(f"{row['bucket']:<10} {row['queries']:<8d} "
                             f"{row['sr10']:.4f}  {row['mrr']:.4f}  {note}")
        return "\n".join(lines)


def success_rate_at_k(ranks, k: int) -> float:
    """Fraction of queries whose true snippet ranks in the top k."""
    ranks = list(ranks)
    if not ranks:
        raise ValueError("no per-query ranks")
    found = sum(1 for r in ranks if r is not None and r <= k)
    return found / len(ranks)


def mrr(ranks, k: int = MRR_TRUNCATION) -> float:
    """Mean reciprocal rank, truncated: ranks beyond k (or missing) add 0."""
    ranks = list(ranks)
    if not ranks:
        raise ValueError("no per-query ranks")
    total = sum(1.0 / r for r in ranks if r is not None and r <= k)
    return total / len(ranks)


def evaluate_checkpoint(test_snippets, params: ModelParams, hp: HyperParams,
                        ks=(1, 10), ablation: AblationConfig = AblationConfig(),
                        length_buckets=None) -> EvalReport:
    """Index the full test pool, run every test query, aggregate metrics."""
    if not test_snippets:
        raise ValueError("empty test set")
    ids, vectors = eng.encode_corpus(test_snippets, params, hp, ablation)
    id_arr = np.array(ids)
    queries = eng.encode_queries(test_snippets, params, hp, ablation)
    qnorm = np.linalg.norm(queries, axis=1, keepdims=True)
    queries = queries / np.maximum(qnorm, hp.delta)

    per_query = []
    t0 = time.perf_counter()
    for qi, snip in enumerate(test_snippets):
        scores = vectors @ queries[qi]
        rank = eng._rank_of(scores, id_arr, snip.id)
        per_query.append(PerQuery(query_id=snip.id, rank=rank, words=snip.query_words))
    search_seconds = time.perf_counter() - t0

    ranks = [p.rank for p in per_query]
    report = EvalReport(
        success_rate={k: success_rate_at_k(ranks, k) for k in ks},
        mrr=mrr(ranks, MRR_TRUNCATION),
        per_query=per_query,
        timing_ms_per_query=search_seconds / len(per_query) * 1000.0,
        pool_size=len(ids))
    if length_buckets is not None:
        report.breakdown = length_breakdown(report, length_buckets)
    return report


def length_breakdown(report: EvalReport, buckets=DEFAULT_LENGTH_BUCKETS) -> list:
    """Per query-word-count bucket: SR@10 and MRR, small buckets flagged."""
    rows = []
    groups = {edges: [] for edges in buckets}
    overflow_edge = max(hi for _, hi in buckets)
    overflow = []
    for p in report.per_query:
        for lo, hi in buckets:
            if lo <= p.words <= hi:
                groups[(lo, hi)].append(p.rank)
                break
        else:
            if p.words > overflow_edge:
                overflow.append(p.rank)
    items = [(f"{lo}-{hi}", groups[(lo, hi)]) for lo, hi in buckets]
    if overflow:
        items.append((f"{overflow_edge + 1}+", overflow))
    for label, ranks in items:
        if not ranks:
            rows.append({"bucket": label, "queries": 0, "sr10": 0.0, "mrr": 0.0,
                         "low_confidence": True})
            continue
        rows.append({
            "bucket": label,
            "queries": len(ranks),
            "sr10": success_rate_at_k(ranks, 10),
            "mrr": mrr(ranks, MRR_TRUNCATION),
            "low_confidence": len(ranks) < LOW_CONFIDENCE_BUCKET,
        })
    return rows


def random_floor(pool_size: int, k: int = MRR_TRUNCATION):
    """Closed-form SR@k and MRR@k of a uniformly random scorer."""
    sr = min(k / pool_size, 1.0)
    mrr_floor = sum(1.0 / r for r in range(1, min(k, pool_size) + 1)) / pool_size
    return sr, mrr_floor


def ablation_campaign(dataset, base_config, variants, out_dir=None, log=print,
                      ks=(1, 10)) -> list:
    """Train (or reuse) one checkpoint per ablation variant and evaluate all
    on the identical pool; returns rows with a delta-vs-full MRR column."""
    import dataclasses
    from pathlib import Path

    rows = []
    full_mrr = None
    for variant in variants:
        ablation = AblationConfig.from_flags(variant) if isinstance(variant, str) else variant
        config = dataclasses.replace(base_config, ablation=ablation)
        ckpt_dir = Path(out_dir) / str(ablation).replace(",", "+") if out_dir else None
        if ckpt_dir is not None and (ckpt_dir / "model.pscs").exists():
            params, hp, loaded_ablation = eng.checkpoint_load(ckpt_dir / "model.pscs")
            assert loaded_ablation == ablation
        else:
            log(f"training variant: {ablation}")
            params, _ = eng.train(config, dataset, out_dir=ckpt_dir, log=log)
            hp = config.hp
        report = evaluate_checkpoint(dataset.test, params, hp, ks=ks, ablation=ablation)
        row = {"variant": str(ablation), "mrr": report.mrr,
               **{f"sr{k}": report.success_rate[k] for k in ks}}
        if ablation.is_full:
            full_mrr = report.mrr
        rows.append(row)
        log(f"variant {ablation}: MRR {report.mrr:.4f}")
    for row in rows:
        row["delta_mrr"] = None if full_mrr is None else row["mrr"] - full_mrr
    return rows


def timing_report(index, params: ModelParams, hp: HyperParams,
                  ablation: AblationConfig, snippets, trials: int = 1000) -> dict:
    """Mean and p95 of encode ms/function and search ms/query."""
    if not snippets:
        raise ValueError("timing needs at least one snippet")
    encode_times = []
    for t in range(trials):
        snip = snippets[t % len(snippets)]
        t0 = time.perf_counter()
        eng.encode_corpus([snip], params, hp, ablation)
        encode_times.append(time.perf_counter() - t0)

    queries = eng.encode_queries(snippets, params, hp, ablation)
    qnorm = np.linalg.norm(queries, axis=1, keepdims=True)
    queries = queries / np.maximum(qnorm, hp.delta)
    search_times = []
    for t in range(trials):
        q = queries[t % len(queries)]
        t0 = time.perf_counter()
        scores = index.vectors @ q
        order = np.lexsort((index.id_array, -scores))
        order[:10]
        search_times.append(time.perf_counter() - t0)

    def stats(xs):
        arr = np.array(xs) * 1000.0
        return {"mean_ms": float(arr.mean()), "p95_ms": float(np.percentile(arr, 95))}

    return {"encode": stats(encode_times), "search": stats(search_times),
            "trials": trials}
