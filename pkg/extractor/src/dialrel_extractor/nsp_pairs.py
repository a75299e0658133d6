"""Sentence-pair generation for next-sentence-prediction evaluation.

Plain-text corpora are segmented into documents (blank-line-separated
blocks) and sentences (split after ./!/? plus whitespace).  Pairs are drawn
half-and-half: is_next pairs are consecutive sentences of one document,
not_next pairs replace the continuation with a random sentence from
anywhere else in the corpus.  Everything is seeded.
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from . import wire
from .extract import ExtractionPolicy, _Encoder

IS_NEXT = "is_next"
NOT_NEXT = "not_next"

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def segment_corpus(text: str) -> list[list[str]]:
    """Documents of sentences; single-line or single-block files are one doc."""
    documents = []
    for block in re.split(r"\n\s*\n", text):
        block = " ".join(block.split())
        if not block:
            continue
        sentences = [s.strip() for s in _SENTENCE_SPLIT.split(block) if len(s.strip()) > 1]
        if sentences:
            documents.append(sentences)
    return documents


def sample_pairs(documents: list[list[str]], n: int, seed: int) -> list[tuple[str, str, str]]:
    """n (first, second, label) triples with an exact 50/50 label balance."""
    if n % 2:
        raise ValueError("n must be even for an exact 50/50 label balance")
    adjacent = [(doc_i, s_i) for doc_i, doc in enumerate(documents)
                for s_i in range(len(doc) - 1)]
    if not adjacent:
        raise ValueError("corpus has no adjacent sentence pairs")
    all_sentences = [s for doc in documents for s in doc]
    rng = np.random.default_rng(seed)

    pairs = []
    for _ in range(n // 2):
        doc_i, s_i = adjacent[int(rng.integers(len(adjacent)))]
        pairs.append((documents[doc_i][s_i], documents[doc_i][s_i + 1], IS_NEXT))
    for _ in range(n // 2):
        doc_i, s_i = adjacent[int(rng.integers(len(adjacent)))]
        first = documents[doc_i][s_i]
        true_next = documents[doc_i][s_i + 1]
        while True:
            random_sentence = all_sentences[int(rng.integers(len(all_sentences)))]
            if random_sentence != true_next:
                break
        pairs.append((first, random_sentence, NOT_NEXT))
    return pairs


def make_nsp_pairs(corpus_text: str | Path, n: int, seed: int, model_id: str,
                   features_out: str | Path, labels_out: str | Path,
                   policy: ExtractionPolicy | None = None) -> int:
    """Encode n seeded sentence pairs and write the pooled-feature store plus
    the gold-label sidecar.  Returns the number of pairs written."""
    text = Path(corpus_text).read_text(encoding="utf-8")
    documents = segment_corpus(text)
    pairs = sample_pairs(documents, n, seed)

    encoder = _Encoder(model_id, policy or ExtractionPolicy())
    records = []
    labels = []
    for i, (first, second, label) in enumerate(pairs):
        vec, truncated = encoder.pooled(first, second)
        pair_id = f"pair{i:06d}"
        records.append(wire.vector_payload(pair_id, "SOLO_NSP", vec, encoder.tag, truncated))
        labels.append((pair_id, label))
    wire.write_records(records, features_out)
    wire.write_labels(labels, labels_out)
    return len(pairs)
