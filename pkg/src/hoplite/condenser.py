"""Two-stage fact condenser.

Stage 1 scores every sentence of every retrieved passage against the
query state and pools the strongest few across passages. Stage 2 jointly
rescores the pooled facts and keeps those with positive scores, so the
context grows by sentences rather than whole passages. Scorers are
pluggable; the reference implementation is purely lexical.

Sentence text is copied verbatim from the corpus - (pid, sentence_index)
provenance must survive serialization exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Protocol, Sequence

from .corpus import Corpus, Fact, MultiHopQuery, Passage
from .encoder import tokenize

STAGE1_FACTS_INFERENCE = 9
STAGE1_FACTS_TRAINING_RANGE = (7, 9)  # sampled per training step at full scale
DEFAULT_TAU = 0.1


class IdfTable:
    """Smoothed inverse document frequency over passage token sets.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1, so a token present in every
    passage still weighs 1.0 and unseen tokens weigh the most.
    """

    def __init__(self, df: Mapping[str, int], n_passages: int):
        self._df = dict(df)
        self.n_passages = n_passages

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "IdfTable":
        df: dict[str, int] = {}
        for passage in corpus:
            for token in set(tokenize(passage.text)):
                df[token] = df.get(token, 0) + 1
        return cls(df, len(corpus))

    def __call__(self, token: str) -> float:
        df = self._df.get(token, 0)
        return math.log((1 + self.n_passages) / (1 + df)) + 1.0


class SentenceScorer(Protocol):
    def score_sentence(
        self, query_text: str, facts: Sequence[Fact], sentence: str
    ) -> float: ...

    def score_pooled(
        self, query_text: str, facts: Sequence[Fact], sentences: Sequence[str]
    ) -> list[float]: ...


class LexicalOverlapScorer:
    """Weighted token overlap with the query state, per sentence token.

    Stage 1 returns sum(idf(t) for overlapping tokens) / len(sentence
    tokens); stage 2 subtracts tau from the same quantity, so only facts
    with real overlap stay positive. With idf=None all weights are 1.0
    and the score is the plain overlapping-token fraction.
    """

    def __init__(self, idf: IdfTable | None = None, tau: float = DEFAULT_TAU):
        self.idf = idf
        self.tau = tau

    def _context(self, query_text: str, facts: Sequence[Fact]) -> set[str]:
        context = set(tokenize(query_text))
        for fact in facts:
            context.update(tokenize(fact.text))
        return context

    def _overlap(self, context: set[str], sentence: str) -> float:
        tokens = tokenize(sentence)
        if not tokens:
            return 0.0
        if self.idf is None:
            hit = sum(1.0 for t in tokens if t in context)
        else:
            hit = sum(self.idf(t) for t in tokens if t in context)
        return hit / len(tokens)

    def score_sentence(
        self, query_text: str, facts: Sequence[Fact], sentence: str
    ) -> float:
        return self._overlap(self._context(query_text, facts), sentence)

    def score_pooled(
        self, query_text: str, facts: Sequence[Fact], sentences: Sequence[str]
    ) -> list[float]:
        context = self._context(query_text, facts)
        return [self._overlap(context, s) - self.tau for s in sentences]


SENTENCE_SCORERS = {"lexical": LexicalOverlapScorer}


def make_sentence_scorer(name: str, idf: IdfTable | None = None, tau: float = DEFAULT_TAU):
    try:
        factory = SENTENCE_SCORERS[name]
    except KeyError:
        raise ValueError(
            f"unknown sentence scorer {name!r}; known: {sorted(SENTENCE_SCORERS)}"
        ) from None
    return factory(idf=idf, tau=tau)


@dataclass(frozen=True)
class CondenserConfig:
    stage1_top_k_facts: int = STAGE1_FACTS_INFERENCE
    scorer: str = "lexical"
    tau: float = DEFAULT_TAU

    def __post_init__(self) -> None:
        if not 1 <= self.stage1_top_k_facts <= 16:
            raise ValueError(
                f"stage1_top_k_facts must be in [1, 16], got {self.stage1_top_k_facts}"
            )


def stage1_extract(
    query: MultiHopQuery,
    passages: Sequence[Passage],
    cfg: CondenserConfig,
    scorer: SentenceScorer,
) -> list[Fact]:
    """Score every sentence of every passage; pool the top few across passages.

    Ties break by (pid ascending, sentence_index ascending).
    """
    pool: list[Fact] = []
    for passage in passages:
        for i, sentence in enumerate(passage.sentences):
            score = scorer.score_sentence(query.q0_text, query.facts, sentence)
            pool.append(
                Fact(pid=passage.pid, sentence_index=i, text=sentence, stage1_score=score)
            )
    pool.sort(key=lambda f: (-f.stage1_score, f.pid, f.sentence_index))
    return pool[: cfg.stage1_top_k_facts]


def stage2_filter(
    query: MultiHopQuery,
    pooled: Sequence[Fact],
    cfg: CondenserConfig,
    scorer: SentenceScorer,
) -> list[Fact]:
    """Jointly rescore the pooled facts; keep strictly positive, best first."""
    if not pooled:
        return []
    scores = scorer.score_pooled(query.q0_text, query.facts, [f.text for f in pooled])
    kept = [
        replace(f, stage2_score=s)
        for f, s in zip(pooled, scores)
        if s > 0.0
    ]
    kept.sort(key=lambda f: (-f.stage2_score, f.pid, f.sentence_index))
    return kept


def condense(
    query: MultiHopQuery,
    passages: Sequence[Passage],
    cfg: CondenserConfig,
    scorer: SentenceScorer,
) -> list[Fact]:
    """Both stages back to back; may legitimately return an empty list."""
    return stage2_filter(query, stage1_extract(query, passages, cfg, scorer), cfg, scorer)
