"""Exchange format for model-derived artifacts.

Feature extraction runs in a separate process (possibly on different
hardware), so everything crossing that boundary is pinned down here: the
record schema, the canonical JSON-lines serialization, a binary bulk-vector
container, the extraction manifest handed to the extractor, and the exported
next-sentence-prediction head.

Record keys follow fixed conventions so producers and consumers agree without
sharing code:

* pair features (``PAIR_NSP``, ``COND_LOGPROB``, ``FOLLOWUP_LOGPROBS``) are
  keyed by the example id;
* context-conditioned negatives (``PAIR_NSP_NEG``) are keyed per context:
  ``<context_id>::neg<j>`` for the j-th fixed negative text and
  ``<context_id>::shuf`` for a shuffled negative;
* single-text features (``SOLO_NSP``, ``MAXPOOL``, ``AVGSTATIC``) are keyed
  ``<context_id>::ctx`` for the context and ``<example_id>::resp`` for the
  response.

Vectors are exchanged at 32-bit float precision: the binary container stores
them bit-exactly, and the JSON form prints decimal strings that re-read to
the same 32-bit values.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, EvalExample, context_groups

VECTOR_KINDS = ("PAIR_NSP", "PAIR_NSP_NEG", "SOLO_NSP", "MAXPOOL", "AVGSTATIC")
KINDS = VECTOR_KINDS + ("COND_LOGPROB", "FOLLOWUP_LOGPROBS")
KIND_CODES = {name: i for i, name in enumerate(KINDS)}

BINARY_MAGIC = b"DRFV1"
BINARY_VERSION = 1


def context_feature_id(context_id: str) -> str:
    return f"{context_id}::ctx"


def response_feature_id(example_id: str) -> str:
    return f"{example_id}::resp"


def fixed_negative_id(context_id: str, index: int = 0) -> str:
    return f"{context_id}::neg{index}"


def shuffled_negative_id(context_id: str) -> str:
    return f"{context_id}::shuf"


@dataclass
class FeatureRecord:
    example_id: str
    kind: str
    dim: int = 0
    values: np.ndarray | None = None          # float32, vector kinds
    logprob_sum: float | None = None          # COND_LOGPROB
    token_count: int | None = None            # COND_LOGPROB
    followups: list[dict] | None = None       # FOLLOWUP_LOGPROBS
    extractor_tag: str = ""
    truncated: bool = False

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"{self.example_id}: unknown feature kind {self.kind!r}")
        if self.kind in VECTOR_KINDS:
            if self.values is None:
                raise ValueError(f"{self.example_id}: vector kind without values")
            if len(self.values) != self.dim:
                raise ValueError(
                    f"{self.example_id}: values length {len(self.values)} != dim {self.dim}"
                )
            if not np.all(np.isfinite(self.values)):
                raise ValueError(f"{self.example_id}: non-finite feature value")
        elif self.kind == "COND_LOGPROB":
            if self.logprob_sum is None or self.token_count is None:
                raise ValueError(f"{self.example_id}: COND_LOGPROB needs logprob_sum and token_count")
            if self.token_count < 1:
                raise ValueError(f"{self.example_id}: token_count must be >= 1")
            if not np.isfinite(self.logprob_sum):
                raise ValueError(f"{self.example_id}: non-finite logprob_sum")
        elif self.kind == "FOLLOWUP_LOGPROBS":
            if not self.followups:
                raise ValueError(f"{self.example_id}: FOLLOWUP_LOGPROBS needs followups")
            for fu in self.followups:
                if not np.isfinite(fu["logprob_sum"]):
                    raise ValueError(f"{self.example_id}: non-finite followup logprob")


def vector_record(example_id: str, kind: str, values, extractor_tag: str = "",
                  truncated: bool = False) -> FeatureRecord:
    """Build a vector record, rounding values to the exchange precision."""
    arr = np.asarray(values, dtype=np.float32)
    rec = FeatureRecord(example_id, kind, dim=arr.size, values=arr,
                        extractor_tag=extractor_tag, truncated=truncated)
    rec.validate()
    return rec


class FeatureStore:
    """An in-memory set of records with unique (example_id, kind) keys."""

    def __init__(self, records=()):
        self._records: list[FeatureRecord] = []
        self._index: dict[tuple[str, str], FeatureRecord] = {}
        self._dim: int | None = None
        for rec in records:
            self.add(rec)

    def add(self, rec: FeatureRecord) -> None:
        rec.validate()
        key = (rec.example_id, rec.kind)
        if key in self._index:
            raise ValueError(f"duplicate feature record for key {key}")
        if rec.kind in VECTOR_KINDS:
            if self._dim is None:
                self._dim = rec.dim
            elif rec.dim != self._dim:
                raise ValueError(
                    f"{rec.example_id}: dim {rec.dim} != store dimension {self._dim}"
                )
        self._index[key] = rec
        self._records.append(rec)

    @property
    def dim(self) -> int:
        if self._dim is None:
            raise ValueError("store holds no vector records; dimension undefined")
        return self._dim

    def get(self, example_id: str, kind: str) -> FeatureRecord | None:
        return self._index.get((example_id, kind))

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)


# ---------------------------------------------------------------------------
# Serialization

def _record_to_dict(rec: FeatureRecord) -> dict:
    d: dict = {"example_id": rec.example_id, "kind": rec.kind}
    if rec.kind in VECTOR_KINDS:
        d["dim"] = rec.dim
        # float(np.float32) prints a decimal string that re-reads to the
        # identical 32-bit value.
        d["values"] = [float(v) for v in np.asarray(rec.values, dtype=np.float32)]
    elif rec.kind == "COND_LOGPROB":
        d["logprob_sum"] = rec.logprob_sum
        d["token_count"] = rec.token_count
    else:
        d["followups"] = rec.followups
    if rec.extractor_tag:
        d["extractor_tag"] = rec.extractor_tag
    if rec.truncated:
        d["truncated"] = True
    return d


def _record_from_dict(d: dict) -> FeatureRecord:
    kind = d["kind"]
    rec = FeatureRecord(
        example_id=str(d["example_id"]),
        kind=kind,
        dim=int(d.get("dim", 0)),
        extractor_tag=str(d.get("extractor_tag", "")),
        truncated=bool(d.get("truncated", False)),
    )
    if kind in VECTOR_KINDS:
        rec.values = np.asarray(d["values"], dtype=np.float32)
    elif kind == "COND_LOGPROB":
        rec.logprob_sum = float(d["logprob_sum"])
        rec.token_count = int(d["token_count"])
    else:
        rec.followups = [
            {"utterance_id": str(fu["utterance_id"]), "logprob_sum": float(fu["logprob_sum"])}
            for fu in d["followups"]
        ]
    return rec


def write_store(records, path: str | Path, binary: bool = False) -> None:
    """Serialize records (JSON lines by default, DRFV1 binary on request)."""
    recs = list(records)
    if binary:
        _write_binary(recs, path)
        return
    with open(path, "w", encoding="utf-8") as f:
        for rec in recs:
            rec.validate()
            f.write(json.dumps(_record_to_dict(rec), ensure_ascii=False) + "\n")


def read_store(path: str | Path) -> FeatureStore:
    """Read a feature store file, auto-detecting the binary container."""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(len(BINARY_MAGIC))
    if head == BINARY_MAGIC:
        return FeatureStore(_read_binary(path))
    store = FeatureStore()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = _record_from_dict(json.loads(line))
            except (KeyError, TypeError, ValueError) as err:
                raise ValueError(f"{path}:{lineno}: bad feature record ({err})") from err
            store.add(rec)
    return store


def _write_binary(records: list[FeatureRecord], path: str | Path) -> None:
    for rec in records:
        rec.validate()
        if rec.kind not in VECTOR_KINDS:
            raise ValueError(
                f"{rec.example_id}: binary container holds bulk vectors only, not {rec.kind}"
            )
    if not records:
        raise ValueError("refusing to write an empty binary store")
    dim = records[0].dim
    with open(path, "wb") as f:
        f.write(BINARY_MAGIC)
        f.write(struct.pack("<IIQ", BINARY_VERSION, dim, len(records)))
        for rec in records:
            if rec.dim != dim:
                raise ValueError(f"{rec.example_id}: dim {rec.dim} != header dim {dim}")
            ident = rec.example_id.encode("utf-8")
            f.write(struct.pack("<H", len(ident)))
            f.write(ident)
            f.write(struct.pack("<B", KIND_CODES[rec.kind]))
            f.write(np.asarray(rec.values, dtype="<f4").tobytes())
    return


def _read_binary(path: Path) -> list[FeatureRecord]:
    code_to_kind = {v: k for k, v in KIND_CODES.items()}
    records = []
    with open(path, "rb") as f:
        magic = f.read(len(BINARY_MAGIC))
        if magic != BINARY_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        version, dim, count = struct.unpack("<IIQ", f.read(16))
        if version != BINARY_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        for _ in range(count):
            (id_len,) = struct.unpack("<H", f.read(2))
            ident = f.read(id_len).decode("utf-8")
            (kind_code,) = struct.unpack("<B", f.read(1))
            values = np.frombuffer(f.read(4 * dim), dtype="<f4")
            records.append(
                FeatureRecord(ident, code_to_kind[kind_code], dim=dim, values=values.copy())
            )
    return records


# ---------------------------------------------------------------------------
# Extraction manifest

@dataclass
class ExtractionRequest:
    example_id: str
    kind: str
    context_turns: list[str] | None = None
    response_text: str | None = None
    negative_text: str | None = None
    followup_utterances: list[str] | None = None

    def to_dict(self) -> dict:
        d: dict = {"example_id": self.example_id, "kind": self.kind}
        if self.context_turns is not None:
            d["context_turns"] = self.context_turns
        if self.response_text is not None:
            d["response_text"] = self.response_text
        if self.negative_text is not None:
            d["negative_text"] = self.negative_text
        if self.followup_utterances is not None:
            d["followup_utterances"] = self.followup_utterances
        return d

    @staticmethod
    def from_dict(d: dict) -> "ExtractionRequest":
        return ExtractionRequest(
            example_id=str(d["example_id"]),
            kind=str(d["kind"]),
            context_turns=list(d["context_turns"]) if "context_turns" in d else None,
            response_text=d.get("response_text"),
            negative_text=d.get("negative_text"),
            followup_utterances=list(d["followup_utterances"]) if "followup_utterances" in d else None,
        )


def emit_manifest(
    corpus: Corpus,
    kinds,
    negative_texts=(),
    followups=(),
    shuffled_negatives=None,
) -> list[ExtractionRequest]:
    """Expand a corpus into one extraction request per required (example, kind).

    ``PAIR_NSP_NEG`` requests are emitted once per (context, negative text),
    never per response; shuffled negatives, when provided as
    ``[(context_id, text), ...]``, likewise yield one request per context.
    Single-text kinds emit one context request per context and one response
    request per example.
    """
    kinds = list(kinds)
    if not kinds:
        raise ValueError("kinds must be non-empty")
    for kind in kinds:
        if kind not in KINDS:
            raise ValueError(f"unknown feature kind {kind!r}")
    if "FOLLOWUP_LOGPROBS" in kinds and not followups:
        raise ValueError("FOLLOWUP_LOGPROBS requested with an empty followups list")

    groups = context_groups(corpus)
    requests: list[ExtractionRequest] = []
    for kind in kinds:
        if kind == "PAIR_NSP":
            for ex in corpus.examples:
                requests.append(
                    ExtractionRequest(ex.id, kind, ex.context.texts(), ex.response.text)
                )
        elif kind == "PAIR_NSP_NEG":
            for cid, exs in groups:
                turns = exs[0].context.texts()
                for j, neg in enumerate(negative_texts):
                    requests.append(
                        ExtractionRequest(fixed_negative_id(cid, j), kind, turns, negative_text=neg)
                    )
            if shuffled_negatives:
                turns_by_cid = {cid: exs[0].context.texts() for cid, exs in groups}
                for cid, neg in shuffled_negatives:
                    if cid not in turns_by_cid:
                        raise ValueError(f"shuffled negative for unknown context {cid!r}")
                    requests.append(
                        ExtractionRequest(shuffled_negative_id(cid), kind,
                                          turns_by_cid[cid], negative_text=neg)
                    )
        elif kind in ("SOLO_NSP", "MAXPOOL", "AVGSTATIC"):
            for cid, exs in groups:
                requests.append(ExtractionRequest(context_feature_id(cid), kind, exs[0].context.texts()))
            for ex in corpus.examples:
                requests.append(
                    ExtractionRequest(response_feature_id(ex.id), kind, response_text=ex.response.text)
                )
        elif kind == "COND_LOGPROB":
            for ex in corpus.examples:
                requests.append(ExtractionRequest(ex.id, kind, ex.context.texts(), ex.response.text))
        elif kind == "FOLLOWUP_LOGPROBS":
            for ex in corpus.examples:
                requests.append(
                    ExtractionRequest(ex.id, kind, ex.context.texts(), ex.response.text,
                                      followup_utterances=list(followups))
                )
    return requests


def write_manifest(requests, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for req in requests:
            f.write(json.dumps(req.to_dict(), ensure_ascii=False) + "\n")


def read_manifest(path: str | Path) -> list[ExtractionRequest]:
    requests = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                requests.append(ExtractionRequest.from_dict(json.loads(line)))
    return requests


# ---------------------------------------------------------------------------
# NSP head

@dataclass
class NspHead:
    weight: np.ndarray  # (2, D); row 0 scores is_next, row 1 not_next
    bias: np.ndarray    # (2,)
    d: int

    def validate(self) -> None:
        if self.weight.shape != (2, self.d):
            raise ValueError(f"NSP head weight shape {self.weight.shape} != (2, {self.d})")
        if self.bias.shape != (2,):
            raise ValueError(f"NSP head bias shape {self.bias.shape} != (2,)")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("non-finite NSP head parameter")


def write_nsp_head(head: NspHead, path: str | Path) -> None:
    head.validate()
    payload = {
        "D": head.d,
        "weights": [[float(v) for v in row] for row in head.weight],
        "bias": [float(v) for v in head.bias],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)
        f.write("\n")


def read_nsp_head(path: str | Path) -> NspHead:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    head = NspHead(
        weight=np.asarray(payload["weights"], dtype=np.float64),
        bias=np.asarray(payload["bias"], dtype=np.float64),
        d=int(payload["D"]),
    )
    head.validate()
    return head


# ---------------------------------------------------------------------------
# Joining

def join(
    corpus: Corpus,
    store: FeatureStore,
    kind: str,
    strict: bool = False,
    id_fn=None,
) -> tuple[list[tuple[EvalExample, FeatureRecord]], list[str]]:
    """Align corpus examples with their stored features, in corpus order.

    Returns complete (example, record) pairs plus the ids with no record.
    ``id_fn`` maps an example to its record key (defaults to the example id).
    Missing features are fatal only in strict mode.
    """
    id_fn = id_fn or (lambda ex: ex.id)
    pairs = []
    missing = []
    for ex in corpus.examples:
        rec = store.get(id_fn(ex), kind)
        if rec is None:
            missing.append(ex.id)
        else:
            pairs.append((ex, rec))
    if strict and missing:
        raise ValueError(f"missing {kind} features for: {', '.join(missing)}")
    return pairs, missing
