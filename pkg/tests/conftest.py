import numpy as np
import pytest

from dialrel.corpus import (
    CandidateResponse,
    Corpus,
    DialogueContext,
    EvalExample,
    Turn,
    write_corpus,
)
from dialrel.featurestore import (
    FeatureStore,
    fixed_negative_id,
    shuffled_negative_id,
    vector_record,
    write_store,
)


def make_example(dataset, cid, j, split, source, ratings, ctx_texts, resp_text):
    turns = [Turn(i % 2, t) for i, t in enumerate(ctx_texts)]
    mean = float(np.mean(ratings)) if ratings else 0.0
    return EvalExample(
        id=f"{cid}-r{j}",
        dataset=dataset,
        split=split,
        context=DialogueContext(turns),
        response=CandidateResponse(resp_text, source, list(ratings), mean),
        context_id=cid,
    )


def make_corpus(dataset="HUMOD", n_contexts=10, split="test", seed=0, likert=(1, 5)):
    """Small synthetic corpus: per context one human and one model response."""
    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n_contexts):
        cid = f"{dataset}-c{i:05d}"
        ctx = [f"so what happened on day {i}?", f"quite a lot, believe me ({i})."]
        for j, source in enumerate(("human", "model")):
            ratings = list(rng.integers(likert[0], likert[1] + 1, size=3).astype(float))
            examples.append(
                make_example(dataset, cid, j, split, source, ratings, ctx, f"reply {i}-{j}")
            )
    return Corpus(dataset, examples, provenance="synthetic")


def planted_vector(rng, d, informative, signs, relevance, sep=0.8, sig_inf=0.5, sig_noise=0.2):
    """Feature whose informative dims encode a relevance level in [-1, 1]."""
    x = rng.normal(0.0, sig_noise, size=d)
    x[informative] = signs * rng.normal(sep * relevance, sig_inf, size=len(informative))
    return x.astype(np.float32)


class PlantedWorld:
    """A corpus + feature store backed by a known sparse separator.

    Gold responses carry positive signal on the informative dims, negatives
    (fixed or shuffled) carry negative signal, and eval-example ratings track
    the planted relevance, so trained heads should correlate with ratings.
    """

    def __init__(self, seed=0, d=24, k=3, n_train_ctx=36, n_eval_ctx=16,
                 dataset="HUMOD", eval_dataset="P_DD"):
        rng = np.random.default_rng(seed)
        self.d = d
        self.informative = np.sort(rng.choice(d, size=k, replace=False))
        self.signs = rng.choice([-1.0, 1.0], size=k)

        train_examples = []
        train_records = []
        for i in range(n_train_ctx):
            cid = f"{dataset}-c{i:05d}"
            ctx = [f"tell me about topic {i}", f"topic {i} is a long story."]
            ex = make_example(dataset, cid, 0, "train", "human", [4.0, 5.0], ctx, f"gold {i}")
            train_examples.append(ex)
            train_records.append(vector_record(
                ex.id, "PAIR_NSP",
                planted_vector(rng, d, self.informative, self.signs, relevance=1.0)))
            train_records.append(vector_record(
                fixed_negative_id(cid, 0), "PAIR_NSP_NEG",
                planted_vector(rng, d, self.informative, self.signs, relevance=-1.0)))
            train_records.append(vector_record(
                shuffled_negative_id(cid), "PAIR_NSP_NEG",
                planted_vector(rng, d, self.informative, self.signs, relevance=-0.8)))
        self.train_corpus = Corpus(dataset, train_examples, "planted train")
        self.train_store = FeatureStore(train_records)

        eval_examples = []
        eval_records = []
        for i in range(n_eval_ctx):
            cid = f"{eval_dataset}-c{i:05d}"
            ctx = [f"what is item {i}?"]
            relevance = float(rng.uniform(-1.0, 1.0))
            rating = 3.0 + 2.0 * relevance + float(rng.normal(0.0, 0.1))
            rating = float(np.clip(rating, 1.0, 5.0))
            ex = make_example(eval_dataset, cid, 0, "test", "model",
                              [rating], ctx, f"candidate {i}")
            eval_examples.append(ex)
            eval_records.append(vector_record(
                ex.id, "PAIR_NSP",
                planted_vector(rng, d, self.informative, self.signs, relevance=relevance)))
        self.eval_corpus = Corpus(eval_dataset, eval_examples, "planted eval")
        self.eval_store = FeatureStore(eval_records)

    def write(self, root):
        paths = {
            "train_corpus": root / "train_corpus.jsonl",
            "train_features": root / "train_features.jsonl",
            "eval_corpus": root / "eval_corpus.jsonl",
            "eval_features": root / "eval_features.jsonl",
        }
        write_corpus(self.train_corpus, paths["train_corpus"])
        write_store(self.train_store, paths["train_features"])
        write_corpus(self.eval_corpus, paths["eval_corpus"])
        write_store(self.eval_store, paths["eval_features"])
        return paths


@pytest.fixture
def planted_world():
    return PlantedWorld(seed=7)
