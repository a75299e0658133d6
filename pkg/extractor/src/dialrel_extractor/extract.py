"""Turn extraction manifests into feature records with pretrained models.

Encoder kinds (PAIR_NSP, PAIR_NSP_NEG, SOLO_NSP, MAXPOOL, AVGSTATIC) run a
BERT-style encoder: pair kinds use the model's native two-segment input and
take the pooled output (linear + tanh over the classification token), the
same vector its next-sentence-prediction head consumes.  Log-prob kinds
(COND_LOGPROB, FOLLOWUP_LOGPROBS) run a causal language model.

Text policy, recorded verbatim in every record's extractor_tag: context
turns are joined with one separator token; inputs that exceed the model
window are truncated from the oldest side (relevance is judged against the
most recent turns) and the record is flagged, never silently cut.  Requests
are processed one at a time in manifest order, so repeat runs are bit-stable
and record order matches the manifest.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from transformers import AutoModelForCausalLM, AutoTokenizer, BertForNextSentencePrediction

from . import wire

ENCODER_KINDS = ("PAIR_NSP", "PAIR_NSP_NEG", "SOLO_NSP", "MAXPOOL", "AVGSTATIC")
LM_KINDS = ("COND_LOGPROB", "FOLLOWUP_LOGPROBS")


@dataclass
class ExtractionPolicy:
    lm_model: str | None = None       # causal LM for the log-prob kinds
    turn_separator: str | None = None  # default: the tokenizer's own separator
    max_length: int | None = None      # default: the model's window
    device: str = "cpu"


class _Encoder:
    def __init__(self, model_id: str, policy: ExtractionPolicy):
        self.model_id = model_id
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.tokenizer.truncation_side = "left"
        self.model = BertForNextSentencePrediction.from_pretrained(model_id)
        self.model.eval().to(policy.device)
        self.device = policy.device
        self.max_length = policy.max_length or self.tokenizer.model_max_length
        if self.max_length is None or self.max_length > 10**6:
            self.max_length = int(self.model.config.max_position_embeddings)
        self.sep = policy.turn_separator or self.tokenizer.sep_token or "\n"
        self.tag = (f"{model_id}|{type(self.tokenizer).__name__}"
                    f"|join=sep:{self.sep}|trunc=left:{self.max_length}|v1")

    def join(self, turns) -> str:
        return f" {self.sep} ".join(turns)

    def _encode(self, first: str, second: str | None):
        untruncated = self.tokenizer(first, second, truncation=False)
        truncated = len(untruncated["input_ids"]) > self.max_length
        strategy = "only_first" if second is not None else "longest_first"
        try:
            enc = self.tokenizer(first, second, truncation=strategy,
                                 max_length=self.max_length, return_tensors="pt")
        except Exception:
            # second segment alone exceeds the window; cut both
            enc = self.tokenizer(first, second, truncation="longest_first",
                                 max_length=self.max_length, return_tensors="pt")
        return {k: v.to(self.device) for k, v in enc.items()}, truncated

    @torch.no_grad()
    def pooled(self, first: str, second: str | None = None):
        enc, truncated = self._encode(first, second)
        out = self.model.bert(**enc)
        return out.pooler_output[0].cpu().numpy(), truncated

    @torch.no_grad()
    def max_pooled(self, text: str):
        enc, truncated = self._encode(text, None)
        hidden = self.model.bert(**enc).last_hidden_state[0]
        mask = enc["attention_mask"][0].bool()
        return hidden[mask].max(dim=0).values.cpu().numpy(), truncated

    @torch.no_grad()
    def avg_static(self, text: str):
        ids = self.tokenizer(text, add_special_tokens=False, truncation=True,
                             max_length=self.max_length)["input_ids"]
        untruncated = self.tokenizer(text, add_special_tokens=False, truncation=False)["input_ids"]
        if not ids:
            raise ValueError("text tokenizes to nothing")
        table = self.model.bert.embeddings.word_embeddings.weight
        vecs = table[torch.tensor(ids, device=self.device)]
        return vecs.mean(dim=0).cpu().numpy(), len(untruncated) > len(ids)

    @torch.no_grad()
    def nsp_head(self):
        layer = self.model.cls.seq_relationship
        return layer.weight.cpu().numpy(), layer.bias.cpu().numpy()


class _CausalLM:
    def __init__(self, model_id: str, policy: ExtractionPolicy):
        self.model_id = model_id
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForCausalLM.from_pretrained(model_id)
        self.model.eval().to(policy.device)
        self.device = policy.device
        cfg = self.model.config
        self.max_length = policy.max_length or int(
            getattr(cfg, "n_positions", 0) or getattr(cfg, "max_position_embeddings", 1024))
        self.sep = (policy.turn_separator or self.tokenizer.eos_token
                    or self.tokenizer.sep_token or "\n")
        self.tag = (f"{model_id}|{type(self.tokenizer).__name__}"
                    f"|join=sep:{self.sep}|trunc=left:{self.max_length}|v1")

    def _ids(self, text: str) -> list[int]:
        return self.tokenizer(text, add_special_tokens=False)["input_ids"]

    def prefix_ids(self, turns, response: str | None = None) -> list[int]:
        text = f" {self.sep} ".join(turns) + f" {self.sep} "
        if response is not None:
            text += response + f" {self.sep} "
        ids = self._ids(text)
        return ids or self._ids(self.sep)

    @torch.no_grad()
    def continuation_logprob(self, prefix_ids: list[int], cont_ids: list[int]):
        """Sum of log P(token | preceding tokens) over the continuation."""
        if not cont_ids:
            raise ValueError("continuation tokenizes to nothing")
        budget = self.max_length - len(cont_ids)
        if budget < 1:
            raise ValueError("continuation alone exceeds the model window")
        truncated = len(prefix_ids) > budget
        if truncated:
            prefix_ids = prefix_ids[-budget:]  # keep the most recent tokens
        ids = torch.tensor([prefix_ids + cont_ids], device=self.device)
        logits = self.model(ids).logits[0]
        logprobs = torch.log_softmax(logits.float(), dim=-1)
        start = len(prefix_ids)
        total = 0.0
        for t in range(start, ids.shape[1]):
            total += float(logprobs[t - 1, ids[0, t]])
        return total, truncated


def _require(req: dict, *fields):
    for f in fields:
        if req.get(f) in (None, [], ""):
            raise ValueError(f"{req['example_id']}: {req['kind']} request needs {f}")


def extract(requests: list[dict], model_id: str, policy: ExtractionPolicy | None = None,
            collect_errors: bool = False):
    """One feature record per manifest request, in manifest order.

    Returns the record dicts, or (records, errors) with per-request error
    strings when ``collect_errors`` is set; nothing is ever dropped silently.
    """
    policy = policy or ExtractionPolicy()
    kinds = {req["kind"] for req in requests}
    encoder = _Encoder(model_id, policy) if kinds & set(ENCODER_KINDS) else None
    lm = None
    if kinds & set(LM_KINDS):
        if not policy.lm_model:
            raise ValueError("log-probability kinds need policy.lm_model (a causal LM)")
        lm = _CausalLM(policy.lm_model, policy)

    records = []
    errors = []
    for req in requests:
        try:
            records.append(_extract_one(req, encoder, lm))
        except (ValueError, RuntimeError) as err:
            if not collect_errors:
                raise
            errors.append(f"{req.get('example_id', '?')}: {err}")
    return (records, errors) if collect_errors else records


def _extract_one(req: dict, encoder: _Encoder | None, lm: _CausalLM | None) -> dict:
    kind = req["kind"]
    example_id = req["example_id"]
    if kind in ("PAIR_NSP", "PAIR_NSP_NEG"):
        _require(req, "context_turns")
        second = req.get("response_text") if kind == "PAIR_NSP" else req.get("negative_text")
        if not second:
            raise ValueError(f"{example_id}: {kind} request needs its paired text")
        vec, truncated = encoder.pooled(encoder.join(req["context_turns"]), second)
        return wire.vector_payload(example_id, kind, vec, encoder.tag, truncated)
    if kind in ("SOLO_NSP", "MAXPOOL", "AVGSTATIC"):
        if req.get("context_turns"):
            text = encoder.join(req["context_turns"])
        elif req.get("response_text"):
            text = req["response_text"]
        else:
            raise ValueError(f"{example_id}: {kind} request needs a text")
        if kind == "SOLO_NSP":
            vec, truncated = encoder.pooled(text)
        elif kind == "MAXPOOL":
            vec, truncated = encoder.max_pooled(text)
        else:
            vec, truncated = encoder.avg_static(text)
        return wire.vector_payload(example_id, kind, vec, encoder.tag, truncated)
    if kind == "COND_LOGPROB":
        _require(req, "context_turns", "response_text")
        prefix = lm.prefix_ids(req["context_turns"])
        cont = lm._ids(req["response_text"])
        total, truncated = lm.continuation_logprob(prefix, cont)
        return wire.logprob_payload(example_id, total, len(cont), lm.tag, truncated)
    if kind == "FOLLOWUP_LOGPROBS":
        _require(req, "context_turns", "response_text", "followup_utterances")
        prefix = lm.prefix_ids(req["context_turns"], req["response_text"])
        followups = []
        any_truncated = False
        for j, utterance in enumerate(req["followup_utterances"]):
            total, truncated = lm.continuation_logprob(prefix, lm._ids(utterance))
            any_truncated = any_truncated or truncated
            followups.append({"utterance_id": f"f{j}", "logprob_sum": total})
        return wire.followup_payload(example_id, followups, lm.tag, any_truncated)
    raise ValueError(f"{example_id}: unknown kind {kind!r}")


def export_nsp_head(model_id: str, out_path, policy: ExtractionPolicy | None = None) -> int:
    """Write the pretrained 2xD next-sentence classifier, unchanged.

    Row 0 scores is_next, matching the model's label convention.  Returns D.
    """
    encoder = _Encoder(model_id, policy or ExtractionPolicy())
    weight, bias = encoder.nsp_head()
    wire.write_nsp_head(weight, bias, out_path)
    return int(weight.shape[1])
