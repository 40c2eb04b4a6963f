"""
Four ways to fit many documents into one prompt
===============================================

A recording wrapper around an extractive mock shows what each strategy
actually sends to the model.
"""

from odmds.corpus import make_document
from odmds.llm import ExtractiveLLM, RecordingLLM
from odmds.summarization import StrategyConfig, summarize, truncate_one_shares

docs = [
    make_document("d1", "The storm broke the harbor wall on Monday night. " * 4),
    make_document("d2", "Council voted to fund repairs from the parks budget. " * 4),
    make_document("d3", "Fishermen moved their boats to the north pier meanwhile. " * 4),
]
query = "What happened to the harbor?"

for strategy, extra in [("truncate_all", {}), ("truncate_one", {}),
                        ("map_reduce", {}), ("refine", {"order": "low_to_high"})]:
    cfg = StrategyConfig(strategy, context_budget=40, max_output_tokens=12, **extra)
    llm = RecordingLLM(ExtractiveLLM())
    record = summarize(docs, query, cfg, llm, query_id="q1", retriever_tag="oracle")
    print(f"== {cfg.label}: {record.llm_calls} call(s), docs {record.docs_used}")
    for req in llm.requests:
        print(f"   [{req.tag}] {len(req.user.split())} prompt words")
    print("  ", " ".join(record.summary.split()))

# an equal share per document, remainder to the top-ranked one
print(truncate_one_shares(3, 10))
