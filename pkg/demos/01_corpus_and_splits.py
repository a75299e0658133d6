"""Normalizing a raw annotated dialogue file and applying the split rules.

Raw relevance datasets arrive in arbitrary layouts, so ingestion is driven
by an adapter: a small field map naming where the context turns, response
texts, and per-annotator ratings live.  This demo fabricates a CSV in the
HUMOD layout style (one row per context, two rated responses), normalizes
it, applies the positional splits, and draws shuffled training negatives.
"""
import csv
import tempfile
from pathlib import Path

from dialrel.corpus import context_groups, ingest, make_splits, shuffle_negatives

workdir = Path(tempfile.mkdtemp(prefix="dialrel-demo-"))
raw = workdir / "toy_humod.csv"

cols = ["turn1", "turn2", "turn3", "human_response", "random_response",
        "h1", "h2", "h3", "r1", "r2", "r3"]
with open(raw, "w", newline="") as f:
    w = csv.DictWriter(f, fieldnames=cols)
    w.writeheader()
    for i in range(40):
        w.writerow({
            "turn1": f"did you see what happened at the market today ({i})?",
            "turn2": "no, tell me everything.",
            "turn3": "someone let fifty pigeons loose." if i % 2 else "",
            "human_response": f"that explains the feathers on my coat ({i}).",
            "random_response": f"the train to Boston leaves at six ({i}).",
            "h1": 5, "h2": 4, "h3": 5,
            "r1": 2, "r2": 1, "r3": 2,
        })

adapter = {
    "format": "csv",
    "context_fields": ["turn1", "turn2", "turn3"],
    "responses": [
        {"text_field": "human_response", "source": "human",
         "rating_fields": ["h1", "h2", "h3"]},
        {"text_field": "random_response", "source": "random_human",
         "rating_fields": ["r1", "r2", "r3"]},
    ],
}

corpus = ingest("HUMOD", raw, adapter)
print(f"ingested {len(corpus.examples)} examples "
      f"from {len(context_groups(corpus))} contexts")
print(f"first gold response rating: {corpus.examples[0].response.mean_rating:.3f} "
      f"(ratings {corpus.examples[0].response.ratings})")

# Positional splits; the documented HUMOD sizes are 3750/500/500 contexts,
# so this 40-context toy lands entirely in train and leaves a warning note.
corpus = make_splits(corpus)
for split in ("train", "valid", "test"):
    print(f"  {split}: {len(corpus.subset(split=split).examples)} examples")
print(f"provenance: {corpus.provenance}")

# Shuffled negatives: gold responses of the contexts after the training
# range (wrapping around), permuted so nobody gets their own response back.
negatives = shuffle_negatives(corpus, window=40, seed=0)
print(f"\n{len(negatives)} shuffled negatives, e.g.:")
for cid, text in negatives[:3]:
    print(f"  {cid} <- {text!r}")
