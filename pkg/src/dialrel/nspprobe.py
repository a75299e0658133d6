"""Dimensionality probe for pooled next-sentence-prediction features.

A trained relevance head concentrates its weight mass on a handful of
feature dimensions.  This probe zeroes every pooled-feature dimension except
the top-k by head weight magnitude and feeds the masked feature to the
pretrained NSP classifier, measuring how much of its accuracy survives.
The pretrained encoder and classifier are never modified; only the feature
vector is masked.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .featurestore import FeatureStore, NspHead
from .relhead import RelevanceModel

IS_NEXT = "is_next"
NOT_NEXT = "not_next"
LABELS = (IS_NEXT, NOT_NEXT)


def top_k_mask(model: RelevanceModel, k: int) -> np.ndarray:
    """Boolean mask, true exactly on the k largest-magnitude weight dims.

    Ties break toward the lower index, so the mask is deterministic.
    """
    d = model.dim
    if not (1 <= k <= d):
        raise ValueError(f"k must be in [1, {d}], got {k}")
    order = np.argsort(-np.abs(model.weights), kind="stable")
    mask = np.zeros(d, dtype=bool)
    mask[order[:k]] = True
    return mask


def nsp_predict(head: NspHead, feature, mask=None) -> str:
    """Label from the affine NSP head; masked-out dims are zeroed first.

    Row 0 of the head scores is_next, row 1 not_next; an exact tie
    resolves to is_next.
    """
    x = np.asarray(feature, dtype=np.float64)
    if x.shape != (head.d,):
        raise ValueError(f"feature shape {x.shape} != ({head.d},)")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (head.d,):
            raise ValueError(f"mask shape {mask.shape} != ({head.d},)")
        x = np.where(mask, x, 0.0)
    logits = head.weight @ x + head.bias
    return IS_NEXT if logits[0] >= logits[1] else NOT_NEXT


def nsp_accuracy(head: NspHead, pair_features, mask=None) -> float:
    """Fraction of (feature, gold_label) pairs the head classifies correctly."""
    pair_features = list(pair_features)
    if not pair_features:
        raise ValueError("no evaluation pairs")
    correct = 0
    for feature, gold in pair_features:
        if gold not in LABELS:
            raise ValueError(f"unknown gold label {gold!r}")
        if nsp_predict(head, feature, mask) == gold:
            correct += 1
    return correct / len(pair_features)


def read_labels(path: str | Path) -> dict[str, str]:
    """Gold-label sidecar: JSON lines of {example_id, label}."""
    labels = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            d = json.loads(line)
            label = str(d["label"])
            if label not in LABELS:
                raise ValueError(f"{d['example_id']}: unknown label {label!r}")
            labels[str(d["example_id"])] = label
    return labels


def write_labels(labels: dict[str, str], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for example_id, label in labels.items():
            f.write(json.dumps({"example_id": example_id, "label": label}) + "\n")


def labelled_pairs(store: FeatureStore, labels: dict[str, str]) -> list[tuple[np.ndarray, str]]:
    """Join SOLO_NSP pair-encoding records with their gold labels."""
    pairs = []
    for rec in store:
        if rec.kind != "SOLO_NSP":
            continue
        label = labels.get(rec.example_id)
        if label is not None:
            pairs.append((rec.values, label))
    if not pairs:
        raise ValueError("no labelled SOLO_NSP records found")
    return pairs
