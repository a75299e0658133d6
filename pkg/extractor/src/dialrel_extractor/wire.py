"""File contracts shared with the consuming toolkit.

Manifest: JSON lines of extraction requests
{example_id, kind, context_turns?, response_text?, negative_text?,
 followup_utterances?}.

Feature store: JSON lines; vector kinds carry {example_id, kind, dim,
values, extractor_tag, truncated?} with values printed so they re-read to
the exact 32-bit floats; COND_LOGPROB carries {logprob_sum, token_count};
FOLLOWUP_LOGPROBS carries {followups: [{utterance_id, logprob_sum}]}.

NSP head: JSON {D, weights: [[...],[...]], bias: [...]}; row 0 scores
is_next.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

VECTOR_KINDS = ("PAIR_NSP", "PAIR_NSP_NEG", "SOLO_NSP", "MAXPOOL", "AVGSTATIC")
KINDS = VECTOR_KINDS + ("COND_LOGPROB", "FOLLOWUP_LOGPROBS")


def read_manifest(path: str | Path) -> list[dict]:
    requests = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            req = json.loads(line)
            if "example_id" not in req or req.get("kind") not in KINDS:
                raise ValueError(f"{path}:{lineno}: bad manifest request")
            requests.append(req)
    return requests


def vector_payload(example_id: str, kind: str, values, tag: str, truncated: bool) -> dict:
    vals = np.asarray(values, dtype=np.float32)
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"{example_id}: non-finite feature value")
    d = {"example_id": example_id, "kind": kind, "dim": int(vals.size),
         "values": [float(v) for v in vals], "extractor_tag": tag}
    if truncated:
        d["truncated"] = True
    return d


def logprob_payload(example_id: str, logprob_sum: float, token_count: int,
                    tag: str, truncated: bool) -> dict:
    d = {"example_id": example_id, "kind": "COND_LOGPROB",
         "logprob_sum": float(logprob_sum), "token_count": int(token_count),
         "extractor_tag": tag}
    if truncated:
        d["truncated"] = True
    return d


def followup_payload(example_id: str, followups: list[dict], tag: str, truncated: bool) -> dict:
    d = {"example_id": example_id, "kind": "FOLLOWUP_LOGPROBS",
         "followups": followups, "extractor_tag": tag}
    if truncated:
        d["truncated"] = True
    return d


def write_records(records: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def write_nsp_head(weight, bias, path: str | Path) -> None:
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weight.ndim != 2 or weight.shape[0] != 2 or bias.shape != (2,):
        raise ValueError(f"NSP head must be (2, D) + (2,), got {weight.shape}, {bias.shape}")
    payload = {"D": int(weight.shape[1]),
               "weights": [[float(v) for v in row] for row in weight],
               "bias": [float(v) for v in bias]}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)
        f.write("\n")


def write_labels(labels: list[tuple[str, str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for example_id, label in labels:
            f.write(json.dumps({"example_id": example_id, "label": label}) + "\n")
