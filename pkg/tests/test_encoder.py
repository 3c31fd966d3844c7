import json

import numpy as np
import pytest

from hoplite.corpus import Fact, MultiHopQuery, Passage
from hoplite.encoder import (
    EncoderConfig,
    LexicalEncoder,
    MatrixFormatError,
    PrecomputedEncoder,
    TokenWeightedEncoder,
    read_matrix,
    tokenize,
    write_matrix,
)


def test_tokenize_lowercases_and_splits():
    assert tokenize("Rome fought; Carthage_2") == ["rome", "fought", "carthage", "2"]
    assert tokenize("") == []
    assert tokenize("___") == []


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(dim=4)
    with pytest.raises(ValueError):
        EncoderConfig(max_query_tokens=100, max_overall_tokens=50)


def test_token_vector_unit_norm(enc):
    v = enc.token_vector("carthage")
    assert v.dtype == np.float32
    assert abs(float(np.linalg.norm(v)) - 1.0) < 1e-6


def test_token_vector_deterministic_across_instances():
    a = LexicalEncoder(EncoderConfig(dim=64, seed=3)).token_vector("rome")
    b = LexicalEncoder(EncoderConfig(dim=64, seed=3)).token_vector("rome")
    assert np.array_equal(a, b)


def test_token_vector_seed_sensitivity():
    a = LexicalEncoder(EncoderConfig(dim=64, seed=3)).token_vector("rome")
    b = LexicalEncoder(EncoderConfig(dim=64, seed=4)).token_vector("rome")
    assert not np.array_equal(a, b)


def test_identical_tokens_share_rows(enc):
    p = Passage(pid="p", title="", sentences=("rome rome",))
    m = enc.encode_passage(p).matrix
    assert np.array_equal(m[0], m[1])


def test_unrelated_tokens_nearly_orthogonal():
    enc = LexicalEncoder(EncoderConfig(dim=128, seed=0))
    dots = [
        float(enc.token_vector(a) @ enc.token_vector(b))
        for a, b in [("rome", "weaving"), ("tiber", "silver"), ("harbor", "cloth")]
    ]
    assert all(abs(d) < 0.5 for d in dots)


def test_shared_trigrams_correlate():
    # "running"/"runner" share several trigrams; similarity should beat noise.
    enc = LexicalEncoder(EncoderConfig(dim=128, seed=0))
    near = float(enc.token_vector("running") @ enc.token_vector("runner"))
    far = float(enc.token_vector("running") @ enc.token_vector("harbor"))
    assert near > far


def test_passage_encoding_layout(enc, tiny_corpus):
    p = tiny_corpus.get("p1")
    pe = enc.encode_passage(p)
    n_title = len(tokenize(p.title))
    n_total = n_title + sum(len(tokenize(s)) for s in p.sentences)
    assert pe.matrix.shape == (n_total, 64)
    assert pe.matrix.dtype == np.float32
    assert pe.title_rows == n_title
    assert pe.sentence_spans[0][0] == n_title
    assert pe.sentence_spans[-1][1] == n_total
    # spans tile the body contiguously
    for (a, b), (c, _) in zip(pe.sentence_spans, pe.sentence_spans[1:]):
        assert b == c
        assert a <= b


def test_passage_token_cap():
    enc = LexicalEncoder(EncoderConfig(dim=64, seed=0, max_passage_tokens=5))
    p = Passage(pid="p", title="one two", sentences=("three four five six", "seven"))
    pe = enc.encode_passage(p)
    assert pe.matrix.shape[0] == 5
    assert pe.title_rows == 2
    # spans clip to the cap instead of pointing past the matrix
    assert pe.sentence_spans == ((2, 5), (5, 5))


def test_query_token_cap(enc):
    text = " ".join(f"tok{i}" for i in range(100))
    eq = enc.encode_query(MultiHopQuery(qid="q", q0_text=text, facts=(), hop_index=0))
    assert eq.query_part.shape[0] == 64
    assert eq.fact_part.shape[0] == 0


def test_fact_budget_keeps_earliest_hops():
    cfg = EncoderConfig(dim=64, seed=0, max_query_tokens=4, max_overall_tokens=10)
    enc = LexicalEncoder(cfg)
    facts = (
        Fact(pid="a", sentence_index=0, text="one two three four"),
        Fact(pid="b", sentence_index=0, text="five six seven"),
        Fact(pid="c", sentence_index=0, text="eight nine"),
    )
    q = MultiHopQuery(qid="q", q0_text="w x y z", facts=facts, hop_index=3)
    eq = enc.encode_query(q)
    # budget = 10 - 4 = 6: all of fact a, then b truncated, c dropped
    assert eq.query_part.shape[0] == 4
    assert eq.fact_part.shape[0] == 6
    want = [enc.token_vector(t) for t in ["one", "two", "three", "four", "five", "six"]]
    assert np.array_equal(eq.fact_part, np.stack(want))


def test_empty_query_encodes_to_empty_matrices(enc):
    eq = enc.encode_query(MultiHopQuery(qid="q", q0_text="", facts=(), hop_index=0))
    assert eq.query_part.shape == (0, 64)
    assert eq.fact_part.shape == (0, 64)
    assert eq.dim == 64


def test_token_weighted_encoder_scales_query_rows(enc):
    weighted = TokenWeightedEncoder(enc, {"rome": 2.0}, enc.cfg)
    q = MultiHopQuery(qid="q", q0_text="rome tiber", facts=(), hop_index=0)
    base = enc.encode_query(q)
    got = weighted.encode_query(q)
    assert np.allclose(got.query_part[0], base.query_part[0] * 2.0)
    assert np.array_equal(got.query_part[1], base.query_part[1])


def test_token_weighted_encoder_passage_passthrough(enc, tiny_corpus):
    weighted = TokenWeightedEncoder(enc, {"rome": 2.0}, enc.cfg)
    p = tiny_corpus.get("p2")
    assert np.array_equal(weighted.encode_passage(p).matrix, enc.encode_passage(p).matrix)


def test_matrix_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.standard_normal((7, 16)).astype(np.float32)
    path = tmp_path / "m.hltm"
    write_matrix(path, m)
    assert np.array_equal(read_matrix(path), m)


def test_matrix_file_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.hltm"
    path.write_bytes(b"XXXX" + b"\x00" * 32)
    with pytest.raises(MatrixFormatError):
        read_matrix(path)


def test_matrix_file_rejects_truncation(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.standard_normal((4, 8)).astype(np.float32)
    path = tmp_path / "m.hltm"
    write_matrix(path, m)
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(MatrixFormatError):
        read_matrix(path)


def _write_precomputed(tmp_path, enc, corpus, queries):
    rows, manifest = [], []
    cursor = 0
    for pid in corpus.pids:
        pe = enc.encode_passage(corpus.get(pid))
        manifest.append(
            {
                "key": pid,
                "start": cursor,
                "rows": int(pe.matrix.shape[0]),
                "sentence_spans": [list(s) for s in pe.sentence_spans],
                "title_rows": pe.title_rows,
            }
        )
        rows.append(pe.matrix)
        cursor += pe.matrix.shape[0]
    for text in queries:
        m = np.stack([enc.token_vector(t) for t in tokenize(text)])
        manifest.append({"key": text, "start": cursor, "rows": int(m.shape[0])})
        rows.append(m)
        cursor += m.shape[0]
    mpath, jpath = tmp_path / "m.hltm", tmp_path / "m.jsonl"
    write_matrix(mpath, np.concatenate(rows, axis=0))
    with open(jpath, "w", encoding="utf-8") as fh:
        for obj in manifest:
            fh.write(json.dumps(obj) + "\n")
    return mpath, jpath


def test_precomputed_encoder_matches_source(tmp_path, enc, tiny_corpus):
    q_text = "carthage fought rome"
    mpath, jpath = _write_precomputed(tmp_path, enc, tiny_corpus, [q_text])
    pre = PrecomputedEncoder(mpath, jpath, cfg=enc.cfg)
    for pid in tiny_corpus.pids:
        want = enc.encode_passage(tiny_corpus.get(pid))
        got = pre.encode_passage(tiny_corpus.get(pid))
        assert np.array_equal(got.matrix, want.matrix)
        assert got.sentence_spans == want.sentence_spans
        assert got.title_rows == want.title_rows
    q = MultiHopQuery(qid="q", q0_text=q_text, facts=(), hop_index=0)
    assert np.array_equal(pre.encode_query(q).query_part, enc.encode_query(q).query_part)


def test_precomputed_encoder_unknown_key(tmp_path, enc, tiny_corpus):
    mpath, jpath = _write_precomputed(tmp_path, enc, tiny_corpus, [])
    pre = PrecomputedEncoder(mpath, jpath, cfg=enc.cfg)
    with pytest.raises(KeyError):
        pre.encode_query(MultiHopQuery(qid="q", q0_text="unseen text", facts=(), hop_index=0))


def test_precomputed_encoder_rejects_out_of_range_manifest(tmp_path, enc, tiny_corpus):
    mpath, jpath = _write_precomputed(tmp_path, enc, tiny_corpus, [])
    with open(jpath, "a", encoding="utf-8") as fh:
        fh.write(json.dumps({"key": "ghost", "start": 10**6, "rows": 5}) + "\n")
    with pytest.raises(MatrixFormatError):
        PrecomputedEncoder(mpath, jpath, cfg=enc.cfg)
