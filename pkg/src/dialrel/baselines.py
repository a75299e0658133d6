"""Closed-form prior relevance metrics over stored model artifacts.

Three families: cosine similarity between a context vector and a response
vector (static subword embeddings, max-pooled contextual embeddings, or
pooled next-sentence-prediction features); per-token conditional
log-probability clipped at the batch 5th percentile and normalized to [0,1];
and follow-up scoring, the negated summed log-probability of canned
follow-up utterances that signal irrelevance.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, context_groups
from .featurestore import FeatureStore, context_feature_id, response_feature_id

# Metric variant -> single-text feature kind holding its vectors.
COSINE_VARIANTS = {
    "cos_ft": "AVGSTATIC",
    "cos_max": "MAXPOOL",
    "cos_nsp": "SOLO_NSP",
}

NORM_PROB_PERCENTILE = 5.0

# The follow-up utterance lists are configuration, not constants: the
# original metric's exact lists live in its released implementation.  This
# one example is illustrative only.
EXAMPLE_IRRELEVANCE_FOLLOWUP = "Why are you changing the topic?"


@dataclass
class ScoredExample:
    example_id: str
    metric: str
    score: float


def write_scores(scores, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in scores:
            f.write(json.dumps({"example_id": s.example_id, "metric": s.metric, "score": s.score}) + "\n")


def read_scores(path: str | Path) -> list[ScoredExample]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                d = json.loads(line)
                out.append(ScoredExample(str(d["example_id"]), str(d["metric"]), float(d["score"])))
    return out


def cosine(u, v) -> float:
    """u.v / (|u||v|); undefined (and an error) for a zero vector."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dim mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine undefined for a zero-norm vector")
    c = float(u @ v) / (nu * nv)
    return min(1.0, max(-1.0, c))


def cosine_metric(
    corpus: Corpus, store: FeatureStore, variant: str, strict: bool = False
) -> tuple[list[ScoredExample], list[str]]:
    """Cosine similarity of each example's context and response vectors.

    The context vector is shared across the responses of one context (keyed
    ``<context_id>::ctx``); the response vector is per example.  Examples
    with either vector missing are reported, not scored.
    """
    if variant not in COSINE_VARIANTS:
        raise ValueError(f"unknown cosine variant {variant!r}")
    kind = COSINE_VARIANTS[variant]
    ctx_of = {}
    for cid, exs in context_groups(corpus):
        for ex in exs:
            ctx_of[ex.id] = cid

    scores = []
    missing = []
    for ex in corpus.examples:
        ctx_rec = store.get(context_feature_id(ctx_of[ex.id]), kind)
        resp_rec = store.get(response_feature_id(ex.id), kind)
        if ctx_rec is None or resp_rec is None:
            missing.append(ex.id)
            continue
        scores.append(ScoredExample(ex.id, variant, cosine(ctx_rec.values, resp_rec.values)))
    if strict and missing:
        raise ValueError(f"missing {kind} features for: {', '.join(missing)}")
    return scores, missing


@dataclass
class NormProbBatchStats:
    c5th: float
    degenerate: bool = False


def norm_prob(
    batch: list[tuple[str, float, int]], metric: str = "norm_prob"
) -> tuple[list[ScoredExample], NormProbBatchStats]:
    """Batch-relative normalized conditional log-probability scores.

    For each (example_id, logprob_sum, token_count), the per-token mean
    log-prob is L = logprob_sum / token_count, and with c5th the batch's 5th
    percentile of L (linear interpolation between closest ranks)::

        score = -(max(c5th, L) - c5th) / c5th

    Scores lie in [0,1], members at or below the percentile score exactly 0,
    and L = 0 scores 1.  The batch is one (dataset, split) at a time; a batch
    with all L identical is degenerate and scores 0 everywhere.
    """
    if not batch:
        raise ValueError("empty batch")
    ids = []
    L = np.empty(len(batch), dtype=np.float64)
    for i, (example_id, logprob_sum, token_count) in enumerate(batch):
        if token_count < 1:
            raise ValueError(f"{example_id}: token_count must be >= 1")
        if logprob_sum > 0.0:
            raise ValueError(f"{example_id}: log-probability sum must be <= 0")
        ids.append(example_id)
        L[i] = logprob_sum / token_count

    c5th = float(np.percentile(L, NORM_PROB_PERCENTILE, method="linear"))
    degenerate = c5th == 0.0 or bool(np.all(L == L[0]))
    if degenerate:
        values = np.zeros_like(L)
    else:
        values = -(np.maximum(c5th, L) - c5th) / c5th
    scores = [ScoredExample(ids[i], metric, float(values[i])) for i in range(len(ids))]
    return scores, NormProbBatchStats(c5th=c5th, degenerate=degenerate)


def norm_prob_metric(
    corpus: Corpus, store: FeatureStore, metric: str = "norm_prob", strict: bool = False
) -> tuple[list[ScoredExample], NormProbBatchStats, list[str]]:
    """norm_prob over a corpus's stored COND_LOGPROB records."""
    batch = []
    missing = []
    for ex in corpus.examples:
        rec = store.get(ex.id, "COND_LOGPROB")
        if rec is None:
            missing.append(ex.id)
        else:
            batch.append((ex.id, rec.logprob_sum, rec.token_count))
    if strict and missing:
        raise ValueError(f"missing COND_LOGPROB features for: {', '.join(missing)}")
    scores, stats = norm_prob(batch, metric=metric)
    return scores, stats, missing


def fed_score(followups: list[tuple[str, float]], polarity: str = "negative_only") -> float:
    """Negated sum of follow-up log-probabilities.

    With irrelevance-signalling follow-ups, a likely follow-up drives the sum
    of log-probs up, so the negated sum is higher for more relevant
    responses.
    """
    if polarity != "negative_only":
        raise ValueError(f"unknown polarity {polarity!r}")
    if not followups:
        raise ValueError("empty follow-up list")
    total = 0.0
    for utterance_id, logprob in followups:
        if logprob > 0.0:
            raise ValueError(f"{utterance_id}: log-probability must be <= 0")
        total += logprob
    return -total


def fed_metric(
    corpus: Corpus, store: FeatureStore, metric: str = "fed", strict: bool = False
) -> tuple[list[ScoredExample], list[str]]:
    """fed_score over a corpus's stored FOLLOWUP_LOGPROBS records."""
    scores = []
    missing = []
    for ex in corpus.examples:
        rec = store.get(ex.id, "FOLLOWUP_LOGPROBS")
        if rec is None:
            missing.append(ex.id)
            continue
        pairs = [(fu["utterance_id"], fu["logprob_sum"]) for fu in rec.followups]
        scores.append(ScoredExample(ex.id, metric, fed_score(pairs)))
    if strict and missing:
        raise ValueError(f"missing FOLLOWUP_LOGPROBS features for: {', '.join(missing)}")
    return scores, missing
