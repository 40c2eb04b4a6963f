"""
Merging similar questions across meetings
=========================================

Queries are clustered by embedding similarity, kept within size bounds,
then merged into one query/summary pair per cluster.
"""

from odmds.corpus import make_document
from odmds.dataset_builder import ClusterBounds, QmdsInstance, build_meeting_dataset
from odmds.retrieval import EmbeddingProviderConfig, HashingEmbedder

meetings = [make_document(f"m{i}", f"Transcript of meeting {i}.") for i in range(6)]
questions = [
    "what did the group decide about the remote control design",
    "what did the group decide about the remote control buttons",
    "what did the group decide about the remote control case",
    "how was the marketing budget discussed",
    "how was the marketing budget discussed by the team",
    "who presented the user interface",
]
instances = [QmdsInstance(q, (meetings[i],), (f"Summary {i}.",)) for i, q in enumerate(questions)]

embedder = HashingEmbedder(EmbeddingProviderConfig(dimension=512))
corpus, merged, report = build_meeting_dataset(instances, embedder, theta=0.6, bounds=ClusterBounds(2, 6))

# no LLM given, so pairs are merged by concatenation
for q in merged:
    print(q.query_id, q.gold_doc_ids)
    print("   ", q.query)
print(report.to_json()["cluster_size_histogram"], "flagged:", len(report.flagged))
