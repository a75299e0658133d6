"""The full ablation grid from the command line.

`dialrel ablate` crosses {training corpus} x {l1, none} x {fixed, shuffled
negatives} for a chosen loss, trains every cell over several seeds, scores
an evaluation corpus, and aggregates correlations per cell.  This demo
fabricates two tiny training worlds and one evaluation set, then runs the
8-cell grid exactly as the CLI would on real feature stores.
"""
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from dialrel.corpus import CandidateResponse, Corpus, DialogueContext, EvalExample, Turn, write_corpus
from dialrel.featurestore import (
    fixed_negative_id, shuffled_negative_id, vector_record, write_store,
)

D, K = 24, 3
rng = np.random.default_rng(3)
informative = rng.choice(D, size=K, replace=False)
signs = rng.choice([-1.0, 1.0], size=K)


def planted(level):
    x = rng.normal(0.0, 0.2, size=D)
    x[informative] = signs * rng.normal(0.8 * level, 0.5, size=K)
    return x


def example(dataset, cid, split, source, rating, text):
    ctx = DialogueContext([Turn(0, f"{cid} opening line?"), Turn(1, "a reply.")])
    return EvalExample(id=f"{cid}-r0", dataset=dataset, split=split, context=ctx,
                       response=CandidateResponse(text, source, [rating], rating),
                       context_id=cid)


def write_world(root, dataset, n_train, n_eval, eval_dataset):
    root.mkdir(parents=True, exist_ok=True)
    train_examples, train_records = [], []
    for i in range(n_train):
        cid = f"{dataset}-c{i:05d}"
        ex = example(dataset, cid, "train", "human", 4.5, f"gold {i}")
        train_examples.append(ex)
        train_records.append(vector_record(ex.id, "PAIR_NSP", planted(+1.0)))
        train_records.append(vector_record(fixed_negative_id(cid, 0), "PAIR_NSP_NEG", planted(-1.0)))
        train_records.append(vector_record(shuffled_negative_id(cid), "PAIR_NSP_NEG", planted(-0.8)))
    eval_examples, eval_records = [], []
    for i in range(n_eval):
        cid = f"{eval_dataset}-c{i:05d}"
        level = float(rng.uniform(-1, 1))
        rating = float(np.clip(3 + 2 * level + rng.normal(0, 0.1), 1, 5))
        ex = example(eval_dataset, cid, "test", "model", rating, f"candidate {i}")
        eval_examples.append(ex)
        eval_records.append(vector_record(ex.id, "PAIR_NSP", planted(level)))
    write_corpus(Corpus(dataset, train_examples), root / "train.jsonl")
    write_store(train_records, root / "train_features.jsonl")
    write_corpus(Corpus(eval_dataset, eval_examples), root / "eval.jsonl")
    write_store(eval_records, root / "eval_features.jsonl")
    return root


workdir = Path(tempfile.mkdtemp(prefix="dialrel-demo-"))
h = write_world(workdir / "h", "HUMOD", 30, 16, "P_DD")
t = write_world(workdir / "t", "USR_TC", 30, 16, "P_DD")
out = workdir / "grid"

cmd = [sys.executable, "-m", "dialrel.cli",
       "ablate", "--grid", "table4",
       "--train-corpus", f"H={h/'train.jsonl'}",
       "--train-features", f"H={h/'train_features.jsonl'}",
       "--train-corpus", f"TCS={t/'train.jsonl'}",
       "--train-features", f"TCS={t/'train_features.jsonl'}",
       "--eval-corpus", f"pdd={h/'eval.jsonl'}",
       "--eval-features", f"pdd={h/'eval_features.jsonl'}",
       "--seeds", "0,1,2", "--n-perm", "1000",
       "--out", str(out)]
print("running:", " ".join(cmd[2:]))
subprocess.run(cmd, check=True)

print(f"\nmodels  : {len(list((out / 'models').glob('*.json')))}")
print(f"reports : {len(list((out / 'reports').glob('*.json')))}")
print(f"summary : {out / 'summary.md'}\n")
print((out / "summary.md").read_text())
