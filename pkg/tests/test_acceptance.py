"""Acceptance criteria, one test each. Every test records a PASS/FAIL/SKIP line.

Run with pytest (lines appear in the terminal summary) or directly:
``python3 -m tests.test_acceptance``.
"""
import os
import random
import time
from pathlib import Path

import numpy as np
import pytest

from odmds.corpus import Corpus, QueryInstance, load_corpus, load_queries, make_document, tokenize
from odmds.dataset_builder import ClusterBounds, QmdsInstance, cluster_queries, q2odmds_transform, resize_clusters
from odmds.llm import ExtractiveLLM, RecordingLLM, ScriptedLLM
from odmds.retrieval import (
    EmbeddingProviderConfig,
    HashingEmbedder,
    RetrievalRun,
    bm25_score,
    build_sparse_index,
    rank_scores,
    search_sparse,
)
from odmds.retrieval_eval import (
    average_precision,
    derive_topk,
    evaluate_run,
    mean_average_precision,
    ndcg_at_k,
    precision_at_k,
    recall_at_k,
)
from odmds.summ_eval import evaluate_summaries, geval_score, multi_ref_rouge, rouge, rouge_l, rouge_n
from odmds.summarization import StrategyConfig, SummaryRecord, summarize

from .oracles import (
    ap_oracle,
    bm25_oracle,
    ndcg_oracle,
    precision_oracle,
    recall_oracle,
    rouge_l_oracle,
    rouge_n_oracle,
)
from .pipeline import output_files, run_fixture_pipeline
from .test_summarization import check_budget, docs_of

RESULTS = []


def record(n, name, ok, detail=""):
    status = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
    line = f"[{status}] criterion {n}: {name}" + (f" ({detail})" if detail else "")
    RESULTS.append(line)
    print(line)
    return status


def test_criterion_1_metric_oracles():
    t0 = time.perf_counter()
    rng = random.Random(2024)
    pool = [f"d{i}" for i in range(10)]
    worst = 0.0
    for _ in range(200):
        ranked = rng.sample(pool, rng.randint(0, 10))
        gold = set(rng.sample(pool, rng.randint(1, 10)))
        k = rng.randint(1, 10)
        worst = max(worst,
                    abs(precision_at_k(ranked, gold, k) - precision_oracle(ranked, gold, k)),
                    abs(recall_at_k(ranked, gold, k) - recall_oracle(ranked, gold, k)),
                    abs(ndcg_at_k(ranked, gold, k) - ndcg_oracle(ranked, gold, k)),
                    abs(average_precision(ranked, gold) - ap_oracle(ranked, gold)))
    # MAP over random multi-query runs
    for _ in range(50):
        gold_map, results = {}, {}
        for q in range(rng.randint(1, 5)):
            gold_map[f"q{q}"] = rng.sample(pool, rng.randint(1, 4))
            results[f"q{q}"] = rng.sample(pool, rng.randint(0, 10))
        run = RetrievalRun("t", 10, {q: rank_scores([(d, -i) for i, d in enumerate(ids)]) for q, ids in results.items()})
        expect = sum(ap_oracle(results[q], set(g)) for q, g in gold_map.items()) / len(gold_map)
        worst = max(worst, abs(mean_average_precision(run, gold_map) - expect))
    ndcg = ndcg_at_k(["g1", "x", "g2"], {"g1", "g2"}, 3)
    ap = average_precision(["x", "g1", "g2"], {"g1", "g2"})
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and abs(ndcg - 0.919721) <= 1e-6 and abs(ap - 0.583333) <= 1e-6 and elapsed < 5
    record(1, "metric oracle suite", ok,
           f"max|d|={worst:.1e}, ndcg={ndcg:.6f}, ap={ap:.6f}, {elapsed:.2f}s")
    assert ok


def test_criterion_2_bm25_oracle():
    rng = random.Random(7)
    worst = 0.0
    for _ in range(100):
        vocab = [f"w{i}" for i in range(rng.randint(1, 8))]
        texts = {f"d{i}": " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 10)))
                 for i in range(rng.randint(1, 12))}
        ix = build_sparse_index(Corpus.from_texts(texts))
        toks = [tokenize(t) for t in texts.values()]
        query = [rng.choice(vocab + ["zz"]) for _ in range(rng.randint(1, 4))]
        for pos in range(len(toks)):
            worst = max(worst, abs(bm25_score(query, pos, ix, 1.2, 0.75) - bm25_oracle(toks, query, pos)))
    tiny = build_sparse_index(Corpus.from_texts({"d1": "a b a", "d2": "b c"}))
    d1 = bm25_score(["a"], 0, tiny, 1.2, 0.75)
    ok = worst <= 1e-9 and abs(d1 - 0.9023) <= 1e-4
    record(2, "BM25 oracle suite", ok, f"max|d|={worst:.1e}, d1={d1:.4f}")
    assert ok


def test_criterion_3_rouge_oracle():
    rng = random.Random(3)
    vocab = [f"t{i}" for i in range(10)]
    worst = 0.0
    for _ in range(200):
        a = [rng.choice(vocab) for _ in range(rng.randint(5, 30))]
        b = [rng.choice(vocab) for _ in range(rng.randint(5, 30))]
        sa, sb = " ".join(a), " ".join(b)
        for n in (1, 2):
            got = rouge_n(sa, sb, n)
            worst = max(worst, *(abs(x - y) for x, y in
                                 zip((got.precision, got.recall, got.f1), rouge_n_oracle(a, b, n))))
        got = rouge_l(sa, sb)
        worst = max(worst, *(abs(x - y) for x, y in zip((got.precision, got.recall, got.f1), rouge_l_oracle(a, b))))
    dominance = True
    for _ in range(100):
        cand = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 15)))
        refs = [" ".join(rng.choice(vocab) for _ in range(rng.randint(1, 15))) for _ in range(rng.randint(1, 5))]
        for variant in ("rouge1", "rouge2", "rougeL"):
            best = multi_ref_rouge(cand, refs, variant).f1
            dominance &= all(best >= rouge(cand, r, variant).f1 for r in refs)
    ok = worst <= 1e-9 and dominance
    record(3, "ROUGE oracle suite", ok, f"max|d|={worst:.1e}, max-dominance={dominance}")
    assert ok


def test_criterion_4_builder_invariants():
    t0 = time.perf_counter()
    rng = random.Random(4)
    embedder = HashingEmbedder(EmbeddingProviderConfig(dimension=128, seed=1))
    vocab = [f"v{i}" for i in range(10)]
    partition = leader_sim = bounded = True
    for _ in range(100):
        qs = [(f"q{i:03d}", " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 6))))
              for i in range(rng.randint(1, 50))]
        theta = rng.uniform(0.1, 0.95)
        clusters = cluster_queries(qs, embedder, theta)
        ids = sorted(q for c in clusters for q in c.member_ids)
        partition &= ids == sorted(q for q, _ in qs)
        leader_sim &= all(float(c.leader[1] @ v) > theta for c in clusters for _, v in c.members[1:])
        resized = resize_clusters(clusters, ClusterBounds(2, 6))
        partition &= sorted(q for c in resized for q in c.member_ids) == ids
        bounded &= all(2 <= len(c) <= 6 or c.flags for c in resized)
    counts = True
    for _ in range(100):
        groups = [rng.sample(range(15), rng.randint(1, 5)) for _ in range(rng.randint(1, 10))]
        insts = [QmdsInstance(f"q{i}", tuple(make_document(f"d{j}", f"doc {j}") for j in g), ("s",))
                 for i, g in enumerate(groups)]
        corpus, out = q2odmds_transform(insts)
        counts &= len(out) == len(insts)
        counts &= sorted(corpus.doc_ids) == sorted({f"d{j}" for g in groups for j in g})
    elapsed = time.perf_counter() - t0
    ok = partition and leader_sim and bounded and counts and elapsed < 10
    record(4, "dataset-builder invariants", ok,
           f"partition={partition}, sim>theta={leader_sim}, sizes-or-flagged={bounded}, "
           f"transform={counts}, {elapsed:.2f}s")
    assert ok


def test_criterion_5_strategy_mechanics():
    t0 = time.perf_counter()
    rng = random.Random(5)
    budget_ok = True
    for _ in range(120):
        strategy = rng.choice(["truncate_all", "truncate_one", "map_reduce", "refine"])
        docs = docs_of(*[rng.randint(1, 60) for _ in range(rng.randint(1, 6))])
        budget = rng.randint(max(6, len(docs)), 80)
        cfg = StrategyConfig(strategy, context_budget=budget, max_output_tokens=rng.randint(1, 4))
        rec = RecordingLLM(ExtractiveLLM())
        summarize(docs, "q?", cfg, rec)
        try:
            check_budget(strategy, rec.requests, cfg)
        except AssertionError:
            budget_ok = False

    rec = RecordingLLM(ScriptedLLM(["p"], cycle=True))
    mr = summarize(docs_of(10, 10, 6), "q?", StrategyConfig("map_reduce", context_budget=12), rec)
    n_docs = 7
    refine = summarize(docs_of(*[4] * n_docs), "q?", StrategyConfig("refine", context_budget=30), ExtractiveLLM())
    counts_ok = mr.llm_calls == 4 == len(rec.requests) and refine.llm_calls == n_docs

    docs = docs_of(5, 6, 7, 8)
    hi = RecordingLLM(ExtractiveLLM())
    lo = RecordingLLM(ExtractiveLLM())
    summarize(docs, "q?", StrategyConfig("refine", context_budget=40, max_output_tokens=3), hi)
    summarize(docs, "q?", StrategyConfig("refine", context_budget=40, max_output_tokens=3, order="low_to_high"), lo)

    def doc_of(req):
        return req.user.split("TEXT:")[1].split(" QUESTION:")[0]

    reverse_ok = [doc_of(r) for r in hi.requests] == [doc_of(r) for r in lo.requests][::-1]

    single = RecordingLLM(ExtractiveLLM())
    one = summarize(docs_of(5), "q?", StrategyConfig("map_reduce", context_budget=50), single)
    single_ok = one.llm_calls == 1 == len(single.requests)
    elapsed = time.perf_counter() - t0
    ok = budget_ok and counts_ok and reverse_ok and single_ok and elapsed < 10
    record(5, "strategy mechanics with mocks", ok,
           f"budget={budget_ok}, calls(map_reduce=4, refine=n)={counts_ok}, "
           f"H2L/L2H reversed={reverse_ok}, single-chunk=1 call={single_ok}, {elapsed:.2f}s")
    assert ok


def test_criterion_6_end_to_end_determinism(tmp_path):
    _, codes_a = run_fixture_pipeline(tmp_path / "a")
    _, codes_b = run_fixture_pipeline(tmp_path / "b")
    a, b = output_files(tmp_path / "a"), output_files(tmp_path / "b")
    kinds = {name.split("/")[0] for name in a}
    ok = set(codes_a.values()) == {0} == set(codes_b.values()) and a == b and {"runs", "summaries", "reports"} <= kinds
    record(6, "end-to-end determinism", ok, f"{len(a)} output files byte-identical={a == b}")
    assert ok


def test_criterion_7_story_bm25_reference():
    root = os.environ.get("STORY_DATA_DIR")
    if not root or not (Path(root) / "corpus.jsonl").exists() or not (Path(root) / "queries.jsonl").exists():
        record(7, "story-data BM25 min(3)", "SKIP", "set STORY_DATA_DIR to a directory with corpus.jsonl and queries.jsonl")
        pytest.skip("story data not available")
    corpus = load_corpus(Path(root) / "corpus.jsonl")
    queries = load_queries(Path(root) / "queries.jsonl", corpus)
    k = derive_topk(queries)["min"].k
    ix = build_sparse_index(corpus)
    run = RetrievalRun("bm25", k, {q.query_id: search_sparse(ix, q.query, k) for q in queries})
    rep = evaluate_run(run, {q.query_id: q.gold_doc_ids for q in queries}).to_json()["metrics"]
    ok = k == 3 and abs(rep["p_at_k"] - 45.88) <= 5.0 and abs(rep["r_at_k"] - 24.44) <= 5.0
    record(7, "story-data BM25 min(3)", ok, f"k={k}, P@K={rep['p_at_k']:.2f}, R@K={rep['r_at_k']:.2f}")
    assert ok


def test_criterion_8_geval_harness_contract():
    queries = [QueryInstance(f"q{i}", "?", ("d",), (f"reference {i}",)) for i in range(3)]
    summaries = [SummaryRecord(f"q{i}", "truncate_all", "bm25", f"summary {i}", 1, ["d"]) for i in range(3)]
    # per query: consistency then relevance; q2's consistency reply is garbage twice
    judge = ScriptedLLM(["5", "Score: 3", "5", "5", "garbage", "no idea", "Score: 3"])
    row = evaluate_summaries(summaries, queries, judge).rows[0]
    always5 = evaluate_summaries(summaries, queries, ScriptedLLM(["5"], cycle=True)).rows[0]
    single = geval_score("p", "r", "relevance", ScriptedLLM(["Score: 3 \u2014 mostly aligned"]))
    ok = (row.geval_consistency == 5.0 and abs(row.geval_relevance - 11 / 3) < 1e-12
          and abs(row.geval_combined - (5.0 + 11 / 3) / 2) < 1e-12 and row.parse_failures == 1
          and (always5.geval_consistency, always5.geval_relevance, always5.geval_combined) == (5.0, 5.0, 5.0)
          and single.raw == 3.0)
    record(8, "G-EVAL harness contract (live-LLM summary scores are not reproducible locally)", ok,
           f"con={row.geval_consistency}, rel={row.geval_relevance:.4f}, failures={row.parse_failures}")
    assert ok


if __name__ == "__main__":
    import tempfile

    for fn in (test_criterion_1_metric_oracles, test_criterion_2_bm25_oracle, test_criterion_3_rouge_oracle,
               test_criterion_4_builder_invariants, test_criterion_5_strategy_mechanics):
        try:
            fn()
        except AssertionError:
            pass
    with tempfile.TemporaryDirectory() as d:
        try:
            test_criterion_6_end_to_end_determinism(Path(d))
        except AssertionError:
            pass
    for fn in (test_criterion_7_story_bm25_reference, test_criterion_8_geval_harness_contract):
        try:
            fn()
        except (AssertionError, pytest.skip.Exception):
            pass
