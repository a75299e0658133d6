"""Normalized dialogue-relevance corpora.

The four annotated datasets (HUMOD, USR-TC, P-DD, FED relevance/correctness)
arrive in unrelated raw layouts.  This module normalizes all of them into one
JSON-lines schema, averages annotator ratings, applies the positional split
rules, and draws shuffled negative responses for training.

Normalized file contract (UTF-8 JSON lines, one example per line)::

    {"id": ..., "dataset": ..., "split": ...,
     "context": {"turns": [{"speaker": 0, "text": ...}, ...]},
     "response": {"text": ..., "source": ..., "ratings": [...],
                  "mean_rating": ...},
     "context_id": ...}

``context_id`` groups the responses that share one context; readers fall back
to grouping consecutive examples with identical turns when it is absent.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DATASETS = ("HUMOD", "USR_TC", "P_DD", "FED_REL", "FED_COR")
SPLITS = ("train", "valid", "test")
SOURCES = ("human", "random_human", "model", "unknown")

# Documented per-dataset shape: context count, Likert range, turns per context.
DATASET_INFO = {
    "HUMOD": {"contexts": 4750, "likert": (1.0, 5.0), "turns": (2, 7)},
    "USR_TC": {"contexts": 60, "likert": (1.0, 3.0), "turns": (1, 19)},
    "P_DD": {"contexts": 200, "likert": (1.0, 5.0), "turns": (1, 1)},
    "FED_REL": {"contexts": 375, "likert": (1.0, 3.0), "turns": (3, 33)},
    "FED_COR": {"contexts": 375, "likert": (1.0, 3.0), "turns": (3, 33)},
}

# Datasets too small to train on; every example is held out for testing.
TEST_ONLY_DATASETS = ("P_DD", "FED_REL", "FED_COR")


class CorpusFormatError(ValueError):
    """Raised for malformed raw rows or normalized records."""


@dataclass
class Turn:
    speaker: int
    text: str


@dataclass
class DialogueContext:
    turns: list[Turn]

    def texts(self) -> list[str]:
        return [t.text for t in self.turns]


@dataclass
class CandidateResponse:
    text: str
    source: str
    ratings: list[float]
    mean_rating: float


@dataclass
class EvalExample:
    id: str
    dataset: str
    split: str
    context: DialogueContext
    response: CandidateResponse
    context_id: str = ""


@dataclass
class Corpus:
    dataset: str
    examples: list[EvalExample]
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.examples)

    def subset(self, split: str | None = None, source: str | None = None) -> "Corpus":
        """Examples filtered by split and/or response source, order preserved."""
        kept = [
            ex
            for ex in self.examples
            if (split is None or ex.split == split)
            and (source is None or ex.response.source == source)
        ]
        return Corpus(self.dataset, kept, self.provenance)


def mean_of_ratings(ratings: list[float]) -> float:
    if not ratings:
        raise ValueError("cannot average an empty ratings list")
    # fsum keeps the mean exactly invariant to annotator order
    return math.fsum(ratings) / len(ratings)


def validate_example(ex: EvalExample, likert: tuple[float, float] | None = None) -> None:
    """Check the structural invariants of one normalized example."""
    if ex.dataset not in DATASETS:
        raise CorpusFormatError(f"{ex.id}: unknown dataset {ex.dataset!r}")
    if ex.split not in SPLITS:
        raise CorpusFormatError(f"{ex.id}: unknown split {ex.split!r}")
    if ex.response.source not in SOURCES:
        raise CorpusFormatError(f"{ex.id}: unknown source {ex.response.source!r}")
    if not ex.context.turns:
        raise CorpusFormatError(f"{ex.id}: context has no turns")
    for turn in ex.context.turns:
        if not turn.text.strip():
            raise CorpusFormatError(f"{ex.id}: empty turn text")
        if turn.speaker not in (0, 1):
            raise CorpusFormatError(f"{ex.id}: speaker must be 0 or 1")
    if ex.dataset in TEST_ONLY_DATASETS and ex.split != "test":
        raise CorpusFormatError(f"{ex.id}: {ex.dataset} examples are test-only")
    if ex.response.ratings:
        expected = mean_of_ratings(ex.response.ratings)
        if abs(expected - ex.response.mean_rating) > 1e-9:
            raise CorpusFormatError(
                f"{ex.id}: mean_rating {ex.response.mean_rating} != mean {expected}"
            )
        if likert is not None:
            lo, hi = likert
            for r in ex.response.ratings:
                if not (lo <= r <= hi):
                    raise CorpusFormatError(
                        f"{ex.id}: rating {r} outside Likert range [{lo},{hi}]"
                    )


# ---------------------------------------------------------------------------
# Normalized-file round trip


def example_to_dict(ex: EvalExample) -> dict:
    d = {
        "id": ex.id,
        "dataset": ex.dataset,
        "split": ex.split,
        "context": {"turns": [{"speaker": t.speaker, "text": t.text} for t in ex.context.turns]},
        "response": {
            "text": ex.response.text,
            "source": ex.response.source,
            "ratings": list(ex.response.ratings),
            "mean_rating": ex.response.mean_rating,
        },
    }
    if ex.context_id:
        d["context_id"] = ex.context_id
    return d


def example_from_dict(d: dict) -> EvalExample:
    ctx = DialogueContext([Turn(int(t["speaker"]), str(t["text"])) for t in d["context"]["turns"]])
    resp = d["response"]
    return EvalExample(
        id=str(d["id"]),
        dataset=str(d["dataset"]),
        split=str(d["split"]),
        context=ctx,
        response=CandidateResponse(
            text=str(resp["text"]),
            source=str(resp["source"]),
            ratings=[float(r) for r in resp["ratings"]],
            mean_rating=float(resp["mean_rating"]),
        ),
        context_id=str(d.get("context_id", "")),
    )


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in corpus.examples:
            f.write(json.dumps(example_to_dict(ex), ensure_ascii=False) + "\n")


def read_corpus(path: str | Path) -> Corpus:
    examples = []
    seen = set()
    dataset = ""
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                ex = example_from_dict(json.loads(line))
            except (KeyError, TypeError, ValueError) as err:
                raise CorpusFormatError(f"{path}:{lineno}: bad record ({err})") from err
            if ex.id in seen:
                raise CorpusFormatError(f"{path}:{lineno}: duplicate example id {ex.id!r}")
            seen.add(ex.id)
            dataset = dataset or ex.dataset
            examples.append(ex)
    if not examples:
        raise CorpusFormatError(f"{path}: no records")
    return Corpus(dataset, examples, provenance=f"read from {path}")


def context_groups(corpus: Corpus) -> list[tuple[str, list[EvalExample]]]:
    """Group examples into contexts, preserving first-appearance order.

    Uses the explicit ``context_id`` when present; otherwise consecutive
    examples with identical context turns form one group.
    """
    groups: list[tuple[str, list[EvalExample]]] = []
    by_id: dict[str, list[EvalExample]] = {}
    prev_turns = None
    for ex in corpus.examples:
        if ex.context_id:
            if ex.context_id in by_id:
                by_id[ex.context_id].append(ex)
            else:
                by_id[ex.context_id] = [ex]
                groups.append((ex.context_id, by_id[ex.context_id]))
            prev_turns = None
            continue
        turns = [(t.speaker, t.text) for t in ex.context.turns]
        if groups and prev_turns == turns:
            groups[-1][1].append(ex)
        else:
            groups.append((ex.id, [ex]))
        prev_turns = turns
    return groups


# ---------------------------------------------------------------------------
# Ingestion

def _parse_ratings(row: dict, rconf: dict, where: str) -> list[float]:
    if "rating_fields" in rconf:
        raw = [row.get(name) for name in rconf["rating_fields"]]
        raw = [v for v in raw if v not in (None, "")]
    elif "ratings_field" in rconf:
        v = row.get(rconf["ratings_field"])
        if v in (None, ""):
            raw = []
        elif isinstance(v, list):
            raw = v
        else:
            raw = [p for p in str(v).replace(";", ",").split(",") if p.strip()]
    else:
        raw = []
    try:
        return [float(r) for r in raw]
    except (TypeError, ValueError) as err:
        raise CorpusFormatError(f"{where}: unparseable rating ({err})") from err


def _iter_raw_records(raw_path: Path, config: dict):
    fmt = config.get("format", "jsonl")
    if fmt == "csv":
        with open(raw_path, "r", encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f, delimiter=config.get("delimiter", ","))
            yield from enumerate(reader, start=2)  # header is line 1
    elif fmt == "jsonl":
        with open(raw_path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if line.strip():
                    yield lineno, json.loads(line)
    else:
        raise ValueError(f"unknown raw format {fmt!r}")


def _context_from_row(row: dict, config: dict, where: str) -> DialogueContext:
    if "context_fields" in config:
        texts = [str(row.get(name) or "").strip() for name in config["context_fields"]]
        texts = [t for t in texts if t]
    elif "context_field" in config:
        blob = row.get(config["context_field"])
        if isinstance(blob, list):
            texts = [str(t).strip() for t in blob if str(t).strip()]
        else:
            sep = config.get("turn_separator", "\n")
            texts = [t.strip() for t in str(blob or "").split(sep) if t.strip()]
    else:
        raise ValueError("adapter config needs context_fields or context_field")
    if not texts:
        raise CorpusFormatError(f"{where}: empty context")
    return DialogueContext([Turn(i % 2, t) for i, t in enumerate(texts)])


def ingest(dataset_kind: str, raw_path: str | Path, adapter_config: dict) -> Corpus:
    """Normalize one raw annotated file into a :class:`Corpus`.

    ``adapter_config`` is a field map describing the raw layout; the raw
    formats themselves are undocumented upstream, so nothing about them is
    assumed here.  Keys:

    ``format``
        ``"csv"`` or ``"jsonl"``.
    ``context_fields`` / ``context_field`` (+ ``turn_separator``)
        Columns holding the context turns, oldest first.
    ``responses``
        List of response sub-maps, one per response carried by a raw row:
        ``{"text_field", "source"|"source_field", "rating_fields"|"ratings_field"}``.
    ``context_id_field``
        Optional; groups one-row-per-response layouts into contexts.
        Without it every raw row is its own context.
    ``fixed_split``
        Optional; force one split for all examples (used for external
        training files that never pass through :func:`make_splits`).
    """
    if dataset_kind not in DATASETS:
        raise ValueError(f"unknown dataset kind {dataset_kind!r}")
    raw_path = Path(raw_path)
    if not raw_path.exists():
        raise FileNotFoundError(raw_path)
    resp_confs = adapter_config.get("responses")
    if not resp_confs:
        raise ValueError("adapter config needs a non-empty responses list")
    likert = tuple(adapter_config.get("likert", DATASET_INFO[dataset_kind]["likert"]))
    fixed_split = adapter_config.get("fixed_split", "test")

    examples: list[EvalExample] = []
    ctx_index: dict[str, int] = {}  # context key -> ordinal
    n_responses_per_ctx: dict[str, int] = {}
    for lineno, row in _iter_raw_records(raw_path, adapter_config):
        where = f"{raw_path}:{lineno}"
        if not isinstance(row, dict):
            raise CorpusFormatError(f"{where}: record is not a mapping")
        context = _context_from_row(row, adapter_config, where)
        if "context_id_field" in adapter_config:
            ctx_key = str(row.get(adapter_config["context_id_field"]))
        else:
            ctx_key = f"row{lineno}"
        if ctx_key not in ctx_index:
            ctx_index[ctx_key] = len(ctx_index)
            n_responses_per_ctx[ctx_key] = 0
        cid = f"{dataset_kind}-c{ctx_index[ctx_key]:05d}"

        for rconf in resp_confs:
            text = str(row.get(rconf["text_field"]) or "").strip()
            if not text:
                if rconf.get("optional"):
                    continue
                raise CorpusFormatError(f"{where}: empty response {rconf['text_field']!r}")
            source = rconf.get("source") or str(row.get(rconf.get("source_field", ""), "unknown"))
            if source not in SOURCES:
                source = "unknown"
            ratings = _parse_ratings(row, rconf, where)
            lo, hi = likert
            for r in ratings:
                if not (lo <= r <= hi):
                    raise CorpusFormatError(
                        f"{where}: rating {r} outside Likert range [{lo},{hi}]"
                    )
            mean = mean_of_ratings(ratings) if ratings else float("nan")
            if not ratings:
                raise CorpusFormatError(f"{where}: response {rconf['text_field']!r} has no ratings")
            j = n_responses_per_ctx[ctx_key]
            n_responses_per_ctx[ctx_key] += 1
            examples.append(
                EvalExample(
                    id=f"{cid}-r{j}",
                    dataset=dataset_kind,
                    split=fixed_split,
                    context=context,
                    response=CandidateResponse(text, source, ratings, mean),
                    context_id=cid,
                )
            )
    if not examples:
        raise CorpusFormatError(f"{raw_path}: no records")

    provenance = f"ingested {raw_path} as {dataset_kind}, {len(ctx_index)} contexts"
    lo_t, hi_t = DATASET_INFO[dataset_kind]["turns"]
    oddball = sum(1 for ex in examples if not (lo_t <= len(ex.context.turns) <= hi_t))
    if oddball:
        provenance += f"; warning: {oddball} examples outside documented turn range {lo_t}-{hi_t}"
    return Corpus(dataset_kind, examples, provenance)


# ---------------------------------------------------------------------------
# Splits

# Positional split rules, by context count from the start of the file.
HUMOD_SPLIT_SIZES = (3750, 500, 500)
USR_TC_VALID_CONTEXTS = 30
USR_TC_TEST_CONTEXTS = 30


def make_splits(corpus: Corpus) -> Corpus:
    """Assign splits by context position in original record order.

    HUMOD: first 3,750 contexts train, next 500 valid, last 500 test.
    USR-TC: first half valid, second half test (30/30 on conforming input);
    its training data lives in a separate external file.  P-DD and both FED
    variants are test-only.  A context count that does not match the
    documented dataset size is recorded in provenance, not fatal.
    """
    groups = context_groups(corpus)
    n = len(groups)
    expected = DATASET_INFO[corpus.dataset]["contexts"]
    provenance = corpus.provenance
    if n != expected:
        provenance += f"; warning: {n} contexts, documented size is {expected}"

    if corpus.dataset == "HUMOD":
        tr, va, _te = HUMOD_SPLIT_SIZES
        bounds = [(0, tr, "train"), (tr, tr + va, "valid"), (tr + va, n, "test")]
    elif corpus.dataset == "USR_TC":
        half = n // 2
        bounds = [(0, half, "valid"), (half, n, "test")]
    else:
        bounds = [(0, n, "test")]

    for i, (_cid, exs) in enumerate(groups):
        for lo, hi, split in bounds:
            if lo <= i < hi:
                for ex in exs:
                    ex.split = split
                break
    return Corpus(corpus.dataset, corpus.examples, provenance)


# ---------------------------------------------------------------------------
# Shuffled negatives

def gold_response_text(exs: list[EvalExample]) -> str:
    """The human (gold) response of a context group; first response otherwise."""
    for ex in exs:
        if ex.response.source == "human":
            return ex.response.text
    return exs[0].response.text


def shuffle_negatives(
    corpus: Corpus, window: int, seed: int, wrap: bool = True
) -> list[tuple[str, str]]:
    """One shuffled negative response text per training context.

    The pool is the gold responses of the ``window`` contexts that follow the
    training range in record order, wrapping around the corpus when ``wrap``
    (a context can then receive another training context's gold response, but
    never its own).  A seeded permutation assigns pool entries to training
    contexts; any self-pairing is fixed by swapping with the next index.
    """
    groups = context_groups(corpus)
    train = [(cid, exs) for cid, exs in groups if exs[0].split == "train"]
    if not train:
        raise ValueError("corpus has no training contexts")
    if window < 1:
        raise ValueError("window must be >= 1")

    last_train = max(i for i, (_, exs) in enumerate(groups) if exs[0].split == "train")
    start = last_train + 1
    available = len(groups) - start
    if window > available and not wrap:
        raise ValueError(
            f"window {window} exceeds the {available} contexts beyond the "
            "training range and wrapping is disabled"
        )
    pool = [gold_response_text(groups[(start + k) % len(groups)][1]) for k in range(window)]

    rng = np.random.default_rng(seed)
    perm = rng.permutation(window)
    n = len(train)
    assigned = [pool[perm[i % window]] for i in range(n)]

    gold = [gold_response_text(exs) for _cid, exs in train]
    for i in range(n):
        if assigned[i] == gold[i]:
            j = (i + 1) % n
            assigned[i], assigned[j] = assigned[j], assigned[i]
    for i in range(n):
        if assigned[i] == gold[i]:
            raise ValueError(
                "cannot avoid self-pairing: negative pool is degenerate "
                f"(context {train[i][0]})"
            )
    return [(train[i][0], assigned[i]) for i in range(n)]
