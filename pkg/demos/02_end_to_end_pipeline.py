"""Planted corpus to metrics table in one sitting.

Generates a small synthetic 3-hop corpus, builds a flat token index, runs
the condensed multi-hop pipeline, and inspects one trace hop by hop before
scoring the whole run against the planted truth.

Run: python3 demos/02_end_to_end_pipeline.py
"""

import dataclasses

from hoplite.config import pipeline_config, resolve_config
from hoplite.encoder import EncoderConfig, LexicalEncoder
from hoplite.evaluation import EvalConfig, evaluate_run
from hoplite.index import IndexConfig, build_index
from hoplite.pipeline import PipelineRunner, run_queries, trace_record
from hoplite.synth import PlantSpec, generate

# --- 1. plant a corpus ------------------------------------------------------

spec = PlantSpec(hops=3, queries=40, corpus_size=500, with_answers=True, seed=4)
result = generate(spec)
print(f"corpus: {len(result.corpus)} passages, {len(result.queries)} queries")

q = result.queries[0]
gold = result.truth[q.qid]
print(f"\nclaim: {q.text}")
print(f"gold chain: {' -> '.join(pid for hop in gold for pid in hop)}")
for h, hop in enumerate(gold, start=1):
    p = result.corpus.get(hop[0])
    print(f"  hop {h}: [{p.pid}] {p.title}: {' | '.join(p.sentences)}")

# --- 2. index + pipeline ----------------------------------------------------

enc = LexicalEncoder(EncoderConfig(dim=64, seed=4))
idx = build_index(result.corpus, enc, IndexConfig(variant="flat"))
print(f"\nindex: {idx.n_vectors} vectors, dim {idx.dim}, variant {idx.variant}")

# the hover preset is 4-hop; trim it to match the planted 3-hop chains
cfg = pipeline_config(resolve_config(preset="hover", environ={}))
cfg = dataclasses.replace(cfg, hops=3, per_hop_k=(25, 25, 25))
runner = PipelineRunner(result.corpus, idx, enc, cfg)

trace = runner.run(q)
for hop in trace.hops:
    head = ", ".join(sp.pid for sp in hop.ranked[:4])
    kept = "; ".join(f"{f.pid}#{f.sentence_index}" for f in hop.kept_facts)
    print(f"\nhop {hop.t}: top [{head}]")
    print(f"  kept facts: {kept or '(none)'}")
print(f"\nfinal context: {len(trace.final_facts)} facts,"
      f" union of {len(trace.union_pids)} passages")
print(f"final query: {trace.final_query_text[:100]}...")

# --- 3. score the whole run ---------------------------------------------------

traces = run_queries(runner, result.queries, threads=4)
records = [trace_record(t) for t in traces]

# the union is hop-major, 75 pids for a 3x25 run, so Retrieval@k needs k
# large enough to cover the later hops; the per-hop gold sits at rank 1
# but lands at union position 0, 25, 50
report = evaluate_run(records, result.queries, result.corpus,
                      EvalConfig(retrieval_k=100, answer_k=100))
print()
print(report.format_table())
print("\nEM compares the kept-fact set exactly against gold; planted distractors")
print("overlap the claim by design, so F1 and Retrieval are the rows to watch here.")

hit = report.overall.retrieval_at_k
assert hit > 0.9, f"expected near-perfect gold coverage on planted data, got {hit}"
