import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odmds.corpus import make_document
from odmds.dataset_builder import (
    ClusterBounds,
    MergedPair,
    QmdsInstance,
    QueryCluster,
    StoryQuery,
    build_meeting_dataset,
    build_story_dataset,
    cluster_queries,
    contextualize_query,
    html_title,
    merge_cluster,
    q2odmds_transform,
    resize_clusters,
    split_story,
)
from odmds.errors import DataError, LlmError
from odmds.llm import LlmResponse, RecordingLLM, ScriptedLLM
from odmds.retrieval import EmbeddingProviderConfig, HashingEmbedder, embed_text


def doc(i, text=None):
    return make_document(f"d{i}", text or f"text of document {i}")


def emb(dim=4096):
    return HashingEmbedder(EmbeddingProviderConfig(dimension=dim, seed=0))


def unit(deg):
    r = math.radians(deg)
    return np.array([math.cos(r), math.sin(r)])


class TestTransform:
    def test_union_and_golds(self):
        corpus, qs = q2odmds_transform([QmdsInstance("q1", (doc(1), doc(2)), ("s1",)),
                                        QmdsInstance("q2", (doc(2), doc(3)), ("s2",))])
        assert corpus.doc_ids == ["d1", "d2", "d3"]
        assert [q.gold_doc_ids for q in qs] == [("d1", "d2"), ("d2", "d3")]
        assert [q.references for q in qs] == [("s1",), ("s2",)]
        assert [q.query_id for q in qs] == ["q0001", "q0002"]

    def test_single_instance(self):
        corpus, qs = q2odmds_transform([QmdsInstance("q", (doc(5),), ("s",), "mine")])
        assert corpus.doc_ids == ["d5"] and qs[0].query_id == "mine"

    def test_conflicting_text(self):
        with pytest.raises(DataError, match="'d2'"):
            q2odmds_transform([QmdsInstance("a", (doc(2),), ("s",)), QmdsInstance("b", (doc(2, "other"),), ("s",))])

    def test_empty(self):
        with pytest.raises(DataError):
            q2odmds_transform([])

    @settings(max_examples=50)
    @given(st.lists(st.lists(st.integers(0, 9), min_size=1, max_size=5), min_size=1, max_size=8))
    def test_counts_preserved(self, groups):
        insts = [QmdsInstance(f"q{i}", tuple(doc(j) for j in g), ("s",)) for i, g in enumerate(groups)]
        corpus, qs = q2odmds_transform(insts)
        assert len(qs) == len(insts)
        assert sorted(corpus.doc_ids) == sorted({f"d{j}" for g in groups for j in g})


class TestSplitStory:
    def test_single_split(self):
        chapters = split_story('A<hr class="x"/>B', story_id="s")
        assert [(c.doc_id, c.text) for c in chapters] == [("s-c1", "A"), ("s-c2", "B")]

    def test_no_delimiter(self, caplog):
        chapters = split_story("<p>Whole story</p>", story_id="s")
        assert [c.text for c in chapters] == ["Whole story"]
        assert "no chapter delimiter" in caplog.text

    def test_empty_middle_dropped(self):
        assert [c.text for c in split_story('A<hr class="x"/><hr class="y"/>B')] == ["A", "B"]

    def test_markup_stripped(self):
        page = '<html><head><title>Tale &amp; Co</title></head><body><p>One&nbsp;two</p>' \
               '<HR CLASS="chap"/><script>x=1</script><p>three</p></body></html>'
        chapters = split_story(page, story_id="t", title=html_title(page))
        assert [c.text for c in chapters] == ["One\xa0two", "three"]
        assert chapters[0].title == "Tale & Co"

    def test_custom_delimiter(self):
        assert len(split_story("a<br data-x='1'>b<br data-x='2'>c", "<br *>")) == 3

    def test_blank_story(self):
        with pytest.raises(DataError):
            split_story('<hr class="x"/>', story_id="s")


class TestContextualize:
    def test_passthrough(self):
        class Echo:
            def complete(self, req):
                q = req.user.split("QUESTION:")[1].split(" REWRITTEN")[0]
                return LlmResponse("[CTX] " + q)

        assert contextualize_query("What is the plot of the story?", "T", None, Echo()) == \
            "[CTX] What is the plot of the story?"

    def test_title_and_answer_prompts_differ(self):
        rec = RecordingLLM(ScriptedLLM(["a", "b"]))
        contextualize_query("Why?", "The Tale", None, rec)
        contextualize_query("Why?", "The Tale", "Because of the storm.", rec)
        title_only, with_answer = (r.user for r in rec.requests)
        assert "The Tale" in title_only and "Why?" in title_only
        assert "Because of the storm." in with_answer and "Because" not in title_only

    def test_quotes_trimmed_and_empty_fallback(self):
        assert contextualize_query("q?", "T", None, ScriptedLLM(['  "Better q?" '])) == "Better q?"
        assert contextualize_query("q?", "T", None, ScriptedLLM(['""'])) == "q?"


def distinct_slot_tokens(embedder, n):
    seen, out = set(), []
    for i in range(10 * n):
        s = embedder.slot(f"z{i}")[0]
        if s not in seen:
            seen.add(s)
            out.append(f"z{i}")
        if len(out) == n:
            return out
    raise AssertionError("not enough distinct slots")


class TestClusterQueries:
    def test_singleton(self):
        [c] = cluster_queries([("q1", "hello world")], emb())
        assert c.member_ids == ["q1"] and c.threshold_used == 0.8

    def test_identical_texts(self):
        assert len(cluster_queries([("a", "same words"), ("b", "same words")], emb(), theta=0.99)) == 1

    def test_constructed_similarities(self):
        e = emb()
        t = distinct_slot_tokens(e, 21)
        q1, q2, q3 = " ".join(t[:10]), " ".join(t[:9] + [t[10]]), " ".join(t[11:21])
        v1, v2, v3 = (embed_text(q, e) for q in (q1, q2, q3))
        # verify the constructed geometry before clustering
        assert float(v1 @ v2) == pytest.approx(0.9, abs=1e-12)
        assert abs(float(v1 @ v3)) < 1e-12 and abs(float(v2 @ v3)) < 1e-12
        clusters = cluster_queries([("q1", q1), ("q2", q2), ("q3", q3)], e, theta=0.8)
        assert [c.member_ids for c in clusters] == [["q1", "q2"], ["q3"]]

    def test_threshold_is_strict(self):
        e = emb()
        t = distinct_slot_tokens(e, 11)
        q1, q2 = " ".join(t[:10]), " ".join(t[:9] + [t[10]])
        assert len(cluster_queries([("a", q1), ("b", q2)], e, theta=0.9)) == 2

    def test_bad_theta(self):
        with pytest.raises(DataError):
            cluster_queries([("a", "x")], emb(), theta=1.0)


def cluster(cid, *degs, theta=0.8):
    return QueryCluster(cid, [(f"{cid}-{i}", unit(d)) for i, d in enumerate(degs)], theta)


class TestResize:
    def test_in_bounds_is_noop(self):
        cs = [cluster("k0", 0, 1), cluster("k1", 90, 91, 92)]
        out = resize_clusters(cs, ClusterBounds(2, 6))
        assert [c.member_ids for c in out] == [c.member_ids for c in cs]
        assert all(not c.flags for c in out)

    def test_singleton_forced_merge(self):
        out = resize_clusters([cluster("k0", 0), cluster("k1", 90, 91, 92)], ClusterBounds(2, 6))
        assert len(out) == 1 and len(out[0]) == 4

    def test_oversized_splits_five_three(self):
        # leader at 0 deg, four at 5 deg (cos .996), three at 35 deg (cos .819)
        big = cluster("k0", 0, 5, 5, 5, 5, 35, 35, 35)
        assert all(float(big.leader[1] @ v) > 0.8 for _, v in big.members[1:])
        out = resize_clusters([big], ClusterBounds(2, 6, theta_step=0.05))
        assert sorted(len(c) for c in out) == [3, 5]
        assert {c.cluster_id for c in out} == {"k0.0000", "k0.0001"}
        assert all(c.threshold_used == pytest.approx(0.85) for c in out)

    def test_unsplittable_is_flagged(self):
        out = resize_clusters([cluster("k0", *[0] * 8)], ClusterBounds(2, 6))
        assert len(out) == 1 and out[0].flags and out[0].flags[0].startswith("oversized")

    def test_merge_prefers_most_similar_then_id(self):
        out = resize_clusters([cluster("k0", 0, 1), cluster("k1", 0, 2), cluster("k2", 10)], ClusterBounds(2, 6))
        assert [len(c) for c in out] == [3, 2]  # tie on similarity goes to k0

    def test_lone_undersized_flagged(self):
        out = resize_clusters([cluster("k0", 0)], ClusterBounds(2, 6))
        assert out[0].flags and out[0].flags[0].startswith("undersized")

    def test_bad_bounds(self):
        with pytest.raises(DataError):
            ClusterBounds(3, 2)


def random_queries(rng, n):
    vocab = [f"v{i}" for i in range(12)]
    return [(f"q{i:03d}", " ".join(rng.choice(vocab) for _ in range(rng.randint(2, 6)))) for i in range(n)]


def test_randomized_cluster_invariants():
    rng = random.Random(99)
    e = emb(256)
    for _ in range(60):
        qs = random_queries(rng, rng.randint(1, 40))
        theta = rng.uniform(0.2, 0.9)
        clusters = cluster_queries(qs, e, theta)
        ids = [q for c in clusters for q in c.member_ids]
        assert sorted(ids) == sorted(q for q, _ in qs)
        for c in clusters:
            for _, v in c.members[1:]:
                assert float(c.leader[1] @ v) > theta
        resized = resize_clusters(clusters, ClusterBounds(2, 6))
        assert sorted(q for c in resized for q in c.member_ids) == sorted(ids)
        for c in resized:
            assert 2 <= len(c) <= 6 or c.flags


class TestMerge:
    texts = {"a": "q1", "b": "q2"}
    sums = {"a": "s1", "b": "s2"}
    golds = {"a": ["d1", "d2"], "b": ["d2", "d3"]}

    def test_singleton_identity(self):
        pair = merge_cluster(QueryCluster("k", [("a", unit(0))], 0.8), self.texts, self.sums, self.golds)
        assert pair == MergedPair("q1", "s1", ("a",), ("d1", "d2"))

    def test_fallback(self):
        c = QueryCluster("k", [("a", unit(0)), ("b", unit(1))], 0.8)
        pair = merge_cluster(c, self.texts, self.sums, self.golds)
        assert (pair.merged_query, pair.merged_summary) == ("q1 Also, q2", "s1\n\ns2")
        assert pair.source_doc_ids == ("d1", "d2", "d3") and not pair.used_fallback

    def test_llm_merge(self):
        rec = RecordingLLM(ScriptedLLM(['"merged q"', "merged s"]))
        c = QueryCluster("k", [("a", unit(0)), ("b", unit(1))], 0.8)
        pair = merge_cluster(c, self.texts, self.sums, self.golds, rec)
        assert (pair.merged_query, pair.merged_summary) == ("merged q", "merged s")
        assert [r.tag for r in rec.requests] == ["merge_query", "merge_summary"]

    def test_llm_failure_falls_back(self):
        class Down:
            def complete(self, req):
                raise LlmError("down")

        c = QueryCluster("k", [("a", unit(0)), ("b", unit(1))], 0.8)
        pair = merge_cluster(c, self.texts, self.sums, self.golds, Down())
        assert pair.merged_query == "q1 Also, q2" and pair.used_fallback


class TestPipelines:
    def meetings(self):
        return [QmdsInstance("what was the budget decision", (doc(1),), ("b1",)),
                QmdsInstance("what was the budget decision made", (doc(2),), ("b2",)),
                QmdsInstance("who chairs the garden committee", (doc(3),), ("g1",)),
                QmdsInstance("who chairs the garden committee now", (doc(4),), ("g2",))]

    def test_meeting_build(self):
        corpus, qs, report = build_meeting_dataset(self.meetings(), emb(), theta=0.7)
        assert [q.query_id for q in qs] == ["m0001", "m0002"]
        assert qs[0].gold_doc_ids == ("d1", "d2") and qs[0].references == ("b1\n\nb2",)
        assert report.to_json()["cluster_size_histogram"] == {"2": 2}
        assert len(corpus) == 4 and report.n_input_queries == 4

    def test_meeting_build_is_deterministic(self):
        a = build_meeting_dataset(self.meetings(), emb(), theta=0.7, llm=ScriptedLLM(["m"], cycle=True))
        b = build_meeting_dataset(self.meetings(), emb(), theta=0.7, llm=ScriptedLLM(["m"], cycle=True))
        assert a[1] == b[1] and a[2].to_json() == b[2].to_json()

    def test_story_build_with_context(self):
        page = '<title>Sea Tale</title><p>one</p><hr class="c"/><p>two</p>'
        rec = RecordingLLM(ScriptedLLM(["What happens at sea in Sea Tale?"]))
        corpus, qs, report = build_story_dataset(
            {"s1": page}, [StoryQuery("What happens?", "s1", ("A storm.",))],
            contextualize="title+answer", llm=rec)
        assert corpus.doc_ids == ["s1-c1", "s1-c2"]
        assert qs[0].query == "What happens at sea in Sea Tale?"
        assert qs[0].gold_doc_ids == ("s1-c1", "s1-c2")
        assert "Sea Tale" in rec.requests[0].user and "A storm." in rec.requests[0].user
        assert report.contextualize == "title+answer"

    def test_story_build_needs_llm_for_context(self):
        with pytest.raises(DataError, match="LLM"):
            build_story_dataset({"s": "x"}, [], contextualize="title")

    def test_unknown_story(self):
        with pytest.raises(DataError, match="'nope'"):
            build_story_dataset({"s": "x"}, [StoryQuery("q", "nope", ("a",))])
