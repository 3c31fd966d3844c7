import json

import pytest

from hoplite.corpus import Corpus, Passage, QueryRecord
from hoplite.index import build_index
from hoplite.retriever import RetrievalConfig, Retriever
from hoplite.scoring import ScoredPassage
from hoplite.supervision import (
    HopSupervision,
    LhoConfig,
    LhoResult,
    SupervisionSet,
    TermWeightTrainer,
    TrainingBatch,
    build_triples,
    discover_positives,
    heuristic_order,
    latent_hop_ordering,
    oracle_facts,
    order_recovery,
    supervision_records,
    triple_records,
    write_supervision,
    write_triples,
)
from hoplite.synth import PlantSpec, generate


class StubRetriever:
    """Fixed ranking, enough surface for discover_positives."""

    def __init__(self, ranking):
        self.ranking = list(ranking)

    def retrieve(self, state, k=None, exclude=frozenset()):
        pids = [p for p in self.ranking if p not in exclude]
        if k is not None:
            pids = pids[:k]
        return [
            ScoredPassage(pid=p, score=float(len(pids) - i), s_query=0.0, s_fact=0.0)
            for i, p in enumerate(pids)
        ]


def _qrec(qid, text, gold=(), facts=(), answer=None):
    return QueryRecord(
        qid=qid,
        text=text,
        gold_pids=frozenset(gold),
        gold_facts=frozenset(facts),
        answer=answer,
        label=None,
        num_hops=None,
    )


def _states(queries):
    from hoplite.corpus import MultiHopQuery

    return {q.qid: MultiHopQuery(qid=q.qid, q0_text=q.text) for q in queries}


def test_discover_positives_head_intersection():
    q = _qrec("q", "text", gold={"A", "B"})
    out = discover_positives(
        StubRetriever(["A", "x", "y", "B"]),
        _states([q]),
        {"q": q},
        {"q": {"A", "B"}},
        k_hat=2,
        cfg=LhoConfig(k_retrieve=10, k_hat=(2,)),
    )["q"]
    assert out.positives == ("A",)
    assert out.fallback is False
    # negatives are every non-gold pid, rank order
    assert out.negatives == ("x", "y")


def test_discover_positives_none_in_head_promotes_best_gold():
    q = _qrec("q", "text", gold={"B"})
    out = discover_positives(
        StubRetriever(["x", "y", "z", "B"]),
        _states([q]),
        {"q": q},
        {"q": {"B"}},
        k_hat=2,
        cfg=LhoConfig(k_retrieve=10, k_hat=(2,)),
    )["q"]
    assert out.positives == ("B",)
    assert out.fallback is True
    assert out.negatives == ("x", "y", "z")


def test_discover_positives_unranked_gold_still_promoted():
    q = _qrec("q", "text", gold={"ghost"})
    out = discover_positives(
        StubRetriever(["x", "y"]),
        _states([q]),
        {"q": q},
        {"q": {"ghost"}},
        k_hat=1,
        cfg=LhoConfig(k_retrieve=10, k_hat=(1,)),
    )["q"]
    assert out.positives == ("ghost",)
    assert out.fallback is True


def test_discover_positives_exhausted_query_is_inactive():
    q = _qrec("q", "text", gold={"A"})
    out = discover_positives(
        StubRetriever(["A", "x"]),
        _states([q]),
        {"q": q},
        {"q": set()},
        k_hat=2,
        cfg=LhoConfig(k_retrieve=10, k_hat=(2,)),
    )["q"]
    assert out.positives == ()
    assert out.negatives == ()
    assert out.fallback is False


def test_oracle_facts_prefers_labeled_sentences():
    corpus = Corpus(
        [Passage(pid="p", title="t", sentences=("s0", "s1", "s2", "s3"))]
    )
    q = _qrec("q", "x", gold={"p"}, facts={("p", 2), ("p", 0)})
    facts = oracle_facts(q, corpus, "p", cap=5)
    assert [(f.pid, f.sentence_index, f.text) for f in facts] == [
        ("p", 0, "s0"),
        ("p", 2, "s2"),
    ]


def test_oracle_facts_unlabeled_takes_all_capped():
    corpus = Corpus(
        [Passage(pid="p", title="t", sentences=tuple(f"s{i}" for i in range(7)))]
    )
    q = _qrec("q", "x", gold={"p"})
    facts = oracle_facts(q, corpus, "p", cap=5)
    assert [f.sentence_index for f in facts] == [0, 1, 2, 3, 4]


def _planted(hops, queries=6, seed=0):
    spec = PlantSpec(
        hops=hops,
        queries=queries,
        corpus_size=queries * (hops + 3) + 20,
        distractors_per_query=3,
        seed=seed,
    )
    return generate(spec)


def _retriever(result, dim=64, seed=0):
    from hoplite.encoder import EncoderConfig, LexicalEncoder

    enc = LexicalEncoder(EncoderConfig(dim=dim, seed=seed))
    idx = build_index(result.corpus, enc)
    cfg = RetrievalConfig(k=25, results_per_vector=idx.n_vectors)
    return Retriever(result.corpus, idx, enc, cfg)


def test_latent_hop_ordering_structure():
    result = _planted(hops=2)
    retriever = _retriever(result)
    cfg = LhoConfig(k_retrieve=20, k_hat=(5, 5))
    lho = latent_hop_ordering(retriever, result.queries, cfg)
    assert set(lho.sets.records) == {q.qid for q in result.queries}
    for q in result.queries:
        hops = lho.sets.records[q.qid]
        assert [h.t for h in hops] == [1, 2]
        assigned = []
        for hop in hops:
            assert set(hop.positives) <= q.gold_pids
            assert not set(hop.negatives) & q.gold_pids
            assigned.extend(hop.positives)
        # no gold assigned twice
        assert len(assigned) == len(set(assigned))
        # first hop retrieves with the raw claim
        assert hops[0].query_text == q.text
        if hops[0].positives:
            assert hops[1].query_text != q.text


def test_latent_hop_ordering_recovers_planted_order():
    result = _planted(hops=2)
    retriever = _retriever(result)
    lho = latent_hop_ordering(retriever, result.queries, LhoConfig(k_retrieve=20, k_hat=(5, 5)))
    truth = {qid: [set(g) for g in groups] for qid, groups in result.truth.items()}
    rec = order_recovery(lho.sets, truth)
    assert rec.n_queries == len(result.queries)
    assert rec.passage_fraction >= 0.75


def test_latent_hop_ordering_deterministic():
    result = _planted(hops=2)
    retriever = _retriever(result)
    cfg = LhoConfig(k_retrieve=20, k_hat=(5, 5))
    a = latent_hop_ordering(retriever, result.queries, cfg)
    b = latent_hop_ordering(retriever, result.queries, cfg)
    assert supervision_records(a) == supervision_records(b)


def test_shuffled_expansion_is_seeded():
    result = _planted(hops=2)
    retriever = _retriever(result)
    cfg7 = LhoConfig(k_retrieve=20, k_hat=(5, 5), seed=7)
    a = latent_hop_ordering(retriever, result.queries, cfg7, expansion="shuffled")
    b = latent_hop_ordering(retriever, result.queries, cfg7, expansion="shuffled")
    assert supervision_records(a) == supervision_records(b)
    with pytest.raises(ValueError, match="expansion"):
        latent_hop_ordering(retriever, result.queries, cfg7, expansion="random")


def test_oversize_gold_warning():
    result = _planted(hops=2)
    retriever = _retriever(result)
    cfg = LhoConfig(k_retrieve=20, k_hat=(5,))  # one hop for two golds
    lho = latent_hop_ordering(retriever, result.queries, cfg)
    assert lho.warnings
    assert "more gold passages" in lho.warnings[0]


def test_lho_config_validation():
    with pytest.raises(ValueError):
        LhoConfig(k_hat=())
    with pytest.raises(ValueError):
        LhoConfig(k_retrieve=10, k_hat=(20,))
    with pytest.raises(ValueError):
        LhoConfig(k_hat=(0,))
    assert LhoConfig(k_hat=(20, None, None, None)).hops == 4


def test_unknown_trainer_rejected():
    result = _planted(hops=2, queries=2)
    retriever = _retriever(result)
    with pytest.raises(ValueError, match="trainer"):
        latent_hop_ordering(
            retriever, result.queries, LhoConfig(k_hat=(5,), trainer="adam")
        )


def test_term_weight_trainer_boosts_positive_tokens():
    corpus = Corpus(
        [
            Passage(pid="pos", title="", sentences=("zebra stripes pattern",)),
            Passage(pid="neg1", title="", sentences=("plain gray rock",)),
            Passage(pid="neg2", title="", sentences=("plain brown dirt",)),
        ]
    )
    from hoplite.corpus import MultiHopQuery
    from hoplite.encoder import EncoderConfig, LexicalEncoder

    enc = LexicalEncoder(EncoderConfig(dim=32, seed=0))
    retriever = Retriever(corpus, build_index(corpus, enc), enc)
    batch = TrainingBatch(
        queries={"q": MultiHopQuery(qid="q", q0_text="zebra plain")},
        positives={"q": frozenset({"pos"})},
        negatives={"q": ("neg1", "neg2")},
    )
    trained = TermWeightTrainer().train(retriever, batch)
    w = trained.encoder.weights
    assert w["zebra"] > 1.0  # in the positive, absent from negatives
    assert w["plain"] < 1.0  # in every negative, absent from the positive
    assert all(0.25 <= v <= 4.0 for v in w.values())
    # no signal -> retriever returned unchanged
    empty = TrainingBatch(queries={}, positives={}, negatives={})
    assert TermWeightTrainer().train(retriever, empty) is retriever


# ---------------------------------------------------------------------------
# heuristic ordering


def test_heuristic_order_title_chain():
    corpus = Corpus(
        [
            Passage(
                pid="A",
                title="alpha beta",
                sentences=("bridge toward gamma delta topic",),
            ),
            Passage(pid="B", title="gamma delta", sentences=("terminal info",)),
        ]
    )
    q = _qrec("q", "claim about alpha beta subject", gold={"A", "B"})
    assert heuristic_order(q, corpus) == [("A",), ("B",)]


def test_heuristic_order_tied_titles_hop_together():
    corpus = Corpus(
        [
            Passage(pid="A", title="alpha", sentences=("text one",)),
            Passage(pid="B", title="beta", sentences=("text two",)),
        ]
    )
    q = _qrec("q", "claim with alpha and beta inside", gold={"A", "B"})
    assert heuristic_order(q, corpus) == [("A", "B")]


def test_heuristic_order_answer_pins_final_hop():
    corpus = Corpus(
        [
            Passage(pid="A", title="alpha", sentences=("leads to beta",)),
            Passage(pid="B", title="beta", sentences=("the answer is koufax",)),
        ]
    )
    q = _qrec("q", "claim mentions alpha", gold={"A", "B"}, answer="Koufax")
    assert heuristic_order(q, corpus) == [("A",), ("B",)]


def test_heuristic_order_answer_in_many_passages_not_pinned():
    corpus = Corpus(
        [
            Passage(pid="A", title="alpha", sentences=("koufax pitched",)),
            Passage(pid="B", title="beta", sentences=("koufax threw",)),
        ]
    )
    q = _qrec("q", "claim mentions alpha beta", gold={"A", "B"}, answer="Koufax")
    # both contain the answer: no pin, both titles tie in the claim
    assert heuristic_order(q, corpus) == [("A", "B")]


def test_heuristic_order_zero_overlap_prefers_sorted_pid():
    corpus = Corpus(
        [
            Passage(pid="A", title="xxx", sentences=("nothing shared",)),
            Passage(pid="B", title="yyy", sentences=("also nothing",)),
        ]
    )
    q = _qrec("q", "completely different claim", gold={"A", "B"})
    assert heuristic_order(q, corpus) == [("A",), ("B",)]


def test_heuristic_order_zero_overlap_uses_downstream_signal():
    corpus = Corpus(
        [
            Passage(pid="A", title="quiet corner", sentences=("dead end words",)),
            Passage(pid="B", title="hidden start", sentences=("points at cobalt",)),
            Passage(pid="C", title="cobalt", sentences=("points at quiet corner",)),
        ]
    )
    q = _qrec("q", "statement sharing nothing", gold={"A", "B", "C"})
    # only B unlocks C (whose text unlocks A)
    assert heuristic_order(q, corpus) == [("B",), ("C",), ("A",)]


def test_heuristic_order_empty_gold():
    corpus = Corpus([Passage(pid="A", title="t", sentences=("x",))])
    q = _qrec("q", "claim", gold=set())
    assert heuristic_order(q, corpus) == []


# ---------------------------------------------------------------------------
# triples


def _sets(hops_by_qid):
    return SupervisionSet(
        {
            qid: tuple(
                HopSupervision(
                    t=t,
                    positives=tuple(sorted(pos)),
                    negatives=tuple(neg),
                    fallback=False,
                    query_text=f"{qid} hop {t}",
                )
                for t, (pos, neg) in enumerate(hops, start=1)
            )
            for qid, hops in hops_by_qid.items()
        }
    )


def test_build_triples_single_positive_keeps_rank_order():
    sets = _sets({"q": [({"P"}, ["n1", "n2", "n3"])]})
    triples = build_triples(sets, cap_per_hop=3, seed=0)
    assert [(t.positive, t.negative) for t in triples] == [
        ("P", "n1"),
        ("P", "n2"),
        ("P", "n3"),
    ]
    assert triples[0].query_text == "q hop 1"
    assert triples[0].hop == 1


def test_build_triples_cap_truncates_cartesian():
    sets = _sets({"q": [({"P1", "P2"}, ["n1", "n2", "n3", "n4", "n5"])]})
    triples = build_triples(sets, cap_per_hop=3, seed=0)
    # need = ceil(3/2) = 2 sampled negatives; cartesian 2x2 truncated to 3
    assert len(triples) == 3
    assert len({(t.positive, t.negative) for t in triples}) == 3


def test_build_triples_empty_sides_yield_nothing():
    sets = _sets({"q": [(set(), ["n1"]), ({"P"}, [])]})
    assert build_triples(sets, cap_per_hop=8, seed=0) == []


def test_build_triples_seed_deterministic():
    sets = _sets({"q": [({"P"}, [f"n{i}" for i in range(40)])]})
    a = build_triples(sets, cap_per_hop=4, seed=5)
    b = build_triples(sets, cap_per_hop=4, seed=5)
    assert triple_records(a) == triple_records(b)
    c = build_triples(sets, cap_per_hop=4, seed=6)
    assert triple_records(a) != triple_records(c)


def test_build_triples_rejects_bad_cap():
    with pytest.raises(ValueError):
        build_triples(_sets({}), cap_per_hop=0)


# ---------------------------------------------------------------------------
# recovery and serialization


def test_order_recovery_counts_and_fallback_exclusion():
    sets = SupervisionSet(
        {
            "q1": (
                HopSupervision(1, ("A",), (), False, "x"),
                HopSupervision(2, ("B",), (), True, "x"),
            ),
            "q2": (
                HopSupervision(1, ("C",), (), False, "x"),
                HopSupervision(2, ("D",), (), False, "x"),
            ),
        }
    )
    truth = {"q1": [{"A"}, {"B"}], "q2": [{"C"}, {"D"}]}
    rec = order_recovery(sets, truth)
    # q1's B was a fallback promotion: right hop, but not recovered
    assert rec.n_passages == 4
    assert rec.passage_fraction == pytest.approx(0.75)
    assert rec.strict_query_fraction == pytest.approx(0.5)


def test_order_recovery_wrong_hop():
    sets = SupervisionSet(
        {
            "q": (
                HopSupervision(1, ("B",), (), False, "x"),
                HopSupervision(2, ("A",), (), False, "x"),
            )
        }
    )
    rec = order_recovery(sets, {"q": [{"A"}, {"B"}]})
    assert rec.passage_fraction == 0.0
    assert rec.strict_query_fraction == 0.0


def test_order_recovery_empty_truth():
    rec = order_recovery(SupervisionSet({}), {})
    assert rec.passage_fraction == 0.0
    assert rec.n_queries == 0


def test_supervision_and_triples_round_trip(tmp_path):
    result = _planted(hops=2, queries=3)
    retriever = _retriever(result)
    lho = latent_hop_ordering(retriever, result.queries, LhoConfig(k_retrieve=20, k_hat=(5, 5)))

    sup_path = tmp_path / "supervision.jsonl"
    write_supervision(sup_path, lho)
    rows = [json.loads(l) for l in sup_path.read_text(encoding="utf-8").splitlines()]
    assert rows == supervision_records(lho)
    assert [r["qid"] for r in rows] == sorted(r["qid"] for r in rows)
    for row in rows:
        assert set(row) == {"qid", "weak", "hops"}
        for hop in row["hops"]:
            assert set(hop) == {"t", "positives", "negatives", "fallback", "query_text"}

    triples = build_triples(lho.sets, cap_per_hop=8, seed=0)
    tri_path = tmp_path / "triples.jsonl"
    write_triples(tri_path, triples)
    t_rows = [json.loads(l) for l in tri_path.read_text(encoding="utf-8").splitlines()]
    assert t_rows == triple_records(triples)
    for row in t_rows:
        assert set(row) == {"qid", "hop", "query", "positive", "negative"}
