"""Recovering hop order from unordered gold sets.

The supervision problem: a labeled corpus tells you *which* passages support
a claim but not in *what order* to retrieve them. This walks one planted
3-hop corpus through latent hop ordering, shows how far an ablated run gets
without real fact expansion, and finishes with the title-graph heuristic and
a sample of mined training triples.

Run: python3 demos/03_hop_ordering.py
"""

from hoplite.encoder import EncoderConfig, LexicalEncoder
from hoplite.index import IndexConfig, build_index
from hoplite.retriever import RetrievalConfig, Retriever
from hoplite.supervision import (
    LhoConfig,
    build_triples,
    heuristic_order,
    latent_hop_ordering,
    order_recovery,
)
from hoplite.synth import PlantSpec, generate

# --- 1. a corpus where the right order is known ------------------------------

spec = PlantSpec(hops=3, queries=60, corpus_size=700, distractors_per_query=3, seed=2)
result = generate(spec)
truth = {qid: [set(hop) for hop in hops] for qid, hops in result.truth.items()}

enc = LexicalEncoder(EncoderConfig(dim=64, seed=2))
idx = build_index(result.corpus, enc, IndexConfig(variant="flat"))
retriever = Retriever(result.corpus, idx, enc,
                      RetrievalConfig(k=25, results_per_vector=48))

# --- 2. order the gold sets ---------------------------------------------------

cfg = LhoConfig(k_retrieve=25, k_hat=(10, 10, 10), seed=2)
lho = latent_hop_ordering(retriever, result.queries, cfg)
rec = order_recovery(lho.sets, truth)
print(f"oracle expansion:   {rec.passage_fraction:.3f} of"
      f" {rec.n_passages} gold passages on the planted hop")

# ablation: grow each hop's query with random sentences instead of the
# discovered facts; only hop-1 golds are reachable, the rest arrive by
# fallback promotion, which order_recovery refuses to credit
shuffled = latent_hop_ordering(retriever, result.queries, cfg, expansion="shuffled")
srec = order_recovery(shuffled.sets, truth)
print(f"shuffled expansion: {srec.passage_fraction:.3f}")

# --- 3. one query in detail ---------------------------------------------------

q = result.queries[0]
print(f"\nclaim: {q.text}")
print(f"planted order: {[sorted(h) for h in truth[q.qid]]}")
for hop in lho.sets.records[q.qid]:
    tag = " (fallback)" if hop.fallback else ""
    print(f"  hop {hop.t}: positives {list(hop.positives)}{tag},"
          f" {len(hop.negatives)} negatives mined")

# --- 4. the no-retrieval baseline ----------------------------------------------

# planted titles chain hop to hop, so a pure title-link walk recovers the
# order without touching the index
bad = sum(
    1 for query in result.queries
    if [set(h) for h in heuristic_order(query, result.corpus)] != truth[query.qid]
)
print(f"\ntitle-graph heuristic: {len(result.queries) - bad}/{len(result.queries)}"
      " queries in planted order")

# --- 5. training triples --------------------------------------------------------

triples = build_triples(lho.sets, cap_per_hop=4, seed=0)
print(f"\n{len(triples)} triples mined (cap 4 per query-hop); first three:")
for t in triples[:3]:
    print(f"  hop {t.hop}  +{t.positive}  -{t.negative}  q='{t.query_text[:60]}...'")

assert rec.passage_fraction > 0.9
assert srec.passage_fraction < 0.5
assert bad == 0
