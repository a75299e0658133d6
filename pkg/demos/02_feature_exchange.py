"""The feature exchange: manifests out, stores back in.

Model inference lives in a separate extractor process, so everything
crossing the boundary is a file.  A manifest lists exactly which texts need
which feature kinds; the store that comes back holds one record per request,
as JSON lines (debuggable) or a binary bulk-vector container (bit-exact).
"""
import tempfile
from pathlib import Path

import numpy as np

from dialrel.corpus import CandidateResponse, Corpus, DialogueContext, EvalExample, Turn
from dialrel.featurestore import (
    emit_manifest, join, read_store, vector_record, write_manifest, write_store,
)

examples = []
for i in range(4):
    ctx = DialogueContext([Turn(0, f"how was the hike ({i})?"), Turn(1, "muddy but worth it.")])
    examples.append(EvalExample(
        id=f"HUMOD-c{i:05d}-r0", dataset="HUMOD", split="train", context=ctx,
        response=CandidateResponse(f"we saw a marmot ({i}).", "human", [5.0, 4.0], 4.5),
        context_id=f"HUMOD-c{i:05d}"))
corpus = Corpus("HUMOD", examples)

requests = emit_manifest(
    corpus,
    kinds=["PAIR_NSP", "PAIR_NSP_NEG", "COND_LOGPROB"],
    negative_texts=["i don't know."],
)
print(f"{len(requests)} extraction requests "
      f"(4 pair + 4 per-context negative + 4 log-prob):")
for req in requests[:3]:
    print(f"  {req.example_id:22s} {req.kind}")

workdir = Path(tempfile.mkdtemp(prefix="dialrel-demo-"))
write_manifest(requests, workdir / "manifest.jsonl")

# Stand in for the extractor: answer each vector request with a random
# 16-dim float32 vector and each log-prob request with a fake sum.
rng = np.random.default_rng(0)
records = []
for req in requests:
    if req.kind == "COND_LOGPROB":
        from dialrel.featurestore import FeatureRecord
        records.append(FeatureRecord(req.example_id, req.kind,
                                     logprob_sum=-float(rng.uniform(5, 40)),
                                     token_count=int(rng.integers(4, 15)),
                                     extractor_tag="demo-lm"))
    else:
        records.append(vector_record(req.example_id, req.kind, rng.normal(size=16),
                                     extractor_tag="demo-encoder"))

jsonl_path = workdir / "features.jsonl"
write_store(records, jsonl_path)
store = read_store(jsonl_path)
print(f"\nstore holds {len(store)} records at dim {store.dim}")

# Bulk vectors can also travel in the binary container, bit for bit.
binary_path = workdir / "features.bin"
write_store([r for r in records if r.kind != "COND_LOGPROB"], binary_path, binary=True)
binary_store = read_store(binary_path)
first = requests[0].example_id
assert np.array_equal(binary_store.get(first, "PAIR_NSP").values,
                      store.get(first, "PAIR_NSP").values)
print(f"binary container round-trips {len(binary_store)} vectors exactly")

pairs, missing = join(corpus, store, "PAIR_NSP")
print(f"join: {len(pairs)} aligned examples, {len(missing)} missing")
