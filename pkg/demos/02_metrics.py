"""
Scoring a retrieval run
=======================

P@K, R@K, NDCG@k and MAP with binary relevance, and the min/mean/max
top-k strategies derived from gold-set sizes.
"""

import numpy as np

from odmds.corpus import QueryInstance
from odmds.retrieval import RetrievalRun, rank_scores
from odmds.retrieval_eval import derive_topk, evaluate_run, format_retrieval_table, ndcg_at_k

# one relevant document, then a miss, then another hit
print("ndcg:", round(ndcg_at_k(["g1", "x", "g2"], {"g1", "g2"}, 3), 6))

queries = [
    QueryInstance("q1", "harbor repairs", ("h1", "h2", "h3"), ("...",)),
    QueryInstance("q2", "garden", ("g1", "g2"), ("...",)),
    QueryInstance("q3", "budget", ("b1",), ("...",)),
]
topk = derive_topk(queries)
print({name: str(s) for name, s in topk.items()})

rankings = {"q1": ["h2", "b1", "h1"], "q2": ["g1", "g2", "h3"], "q3": ["h1", "b1", "g1"]}
k = topk["max"].k
run = RetrievalRun("demo", k, {q: rank_scores(zip(ids, np.linspace(1, 0.1, len(ids)))) for q, ids in rankings.items()})
report = evaluate_run(run, {q.query_id: q.gold_doc_ids for q in queries}, dataset="toy", strategy="max")
print(format_retrieval_table([report]))

# per-query values behind the means
for row in report.per_query:
    print(row["query_id"], {m: round(v, 3) for m, v in row.items() if m != "query_id"})
