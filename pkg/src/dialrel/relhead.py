"""Sparse logistic relevance head over frozen pair features.

The metric is a single logistic regression trained on pooled
next-sentence-prediction pair features: positives are (context, gold
response) pairs; negatives pair the same context either with one fixed text
(default "i don't know.") or with a shuffled human response.  L1
regularization (lambda = 1) keeps the learned weight vector sparse, which is
what lets the single fixed negative work at all.

Training runs a fixed 2 epochs of Adam (lr 0.001, batch size 6) with BCE
loss by default; the ablation grid swaps the regularizer, the negative
scheme, and the loss (two-logit softmax cross-entropy, or a modified triplet
loss).  Training is bit-deterministic given (pairs, config).
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .baselines import ScoredExample
from .corpus import Corpus, context_groups
from .featurestore import VECTOR_KINDS, FeatureStore, fixed_negative_id, shuffled_negative_id

logger = logging.getLogger(__name__)

LOSSES = ("bce_sigmoid", "bce_softmax2", "triplet_mod")
REGULARIZERS = ("none", "l1", "l2")
NEGATIVE_SCHEMES = ("fixed", "shuffled")

DEFAULT_NEGATIVE_TEXT = "i don't know."
# The published string is ambiguous about the trailing period; both spellings
# are accepted wherever a negative text is configured.
ALT_NEGATIVE_TEXT = "i don't know"

PROB_EPS = 1e-7  # clamp distance from {0,1} before taking logs

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    feature_kind: str = "PAIR_NSP"
    loss: str = "bce_sigmoid"
    regularizer: str = "l1"
    lam: float = 1.0
    negatives: str = "fixed"
    negative_texts: list[str] = field(default_factory=lambda: [DEFAULT_NEGATIVE_TEXT])
    epochs: int = 2
    batch_size: int = 6
    learning_rate: float = 0.001
    seed: int = 0
    margin: float = 0.4

    def validate(self) -> None:
        if self.feature_kind not in VECTOR_KINDS:
            raise ValueError(f"feature_kind must be a vector kind, not {self.feature_kind!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if self.negatives not in NEGATIVE_SCHEMES:
            raise ValueError(f"unknown negative scheme {self.negatives!r}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.loss == "triplet_mod" and self.margin <= 0:
            raise ValueError("triplet margin must be > 0")
        if self.negatives == "fixed" and not self.negative_texts:
            raise ValueError("fixed negatives need at least one text")

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


@dataclass
class RelevanceModel:
    weights: np.ndarray  # (D,)
    bias: float
    config: dict

    @property
    def dim(self) -> int:
        return int(self.weights.size)

    def validate(self) -> None:
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.bias):
            raise ValueError("non-finite model parameter")


@dataclass
class TrainingPair:
    context_id: str
    positive_feature: np.ndarray
    negative_feature: np.ndarray


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def forward(model: RelevanceModel, x) -> float:
    """Relevance score sigmoid(w.x + b) in (0,1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.weights.shape:
        raise ValueError(f"dim mismatch: feature {x.shape} vs weights {model.weights.shape}")
    return float(sigmoid(float(model.weights @ x) + model.bias))


# ---------------------------------------------------------------------------
# Losses (scalar forms; the trainer uses the batched logit-space versions)

def _clamp_prob(y, where: str):
    y = np.asarray(y, dtype=np.float64)
    clipped = np.clip(y, PROB_EPS, 1.0 - PROB_EPS)
    n_clamped = int(np.count_nonzero(clipped != y))
    if n_clamped:
        logger.warning("%s: clamped %d probability value(s) to [%g, %g]",
                       where, n_clamped, PROB_EPS, 1.0 - PROB_EPS)
    return clipped


def loss_bce(y_pos, y_neg) -> float:
    """-ln(y_pos) - ln(1 - y_neg), averaged over the batch when given arrays."""
    y_pos = _clamp_prob(y_pos, "loss_bce")
    y_neg = _clamp_prob(y_neg, "loss_bce")
    return float(np.mean(-np.log(y_pos) - np.log(1.0 - y_neg)))


def loss_triplet_mod(y_pos, y_neg, m: float) -> float:
    """Modified triplet loss -log(1 + m - f), f = max(y_neg - y_pos + m, 0).

    The hinge is oriented for similarity scores: it is inactive (loss at the
    floor -log(1+m), a negative constant) while the positive outscores the
    negative by at least the margin, so a drifting negative stops mattering
    once the gold response is comfortably ahead.  The log reshaping keeps
    gradients alive against sigmoid saturation.  Averaged over the batch;
    cannot blow up because y in (0,1) keeps the hinge below 1 + m.
    """
    if m <= 0:
        raise ValueError("margin must be > 0")
    y_pos = np.asarray(y_pos, dtype=np.float64)
    y_neg = np.asarray(y_neg, dtype=np.float64)
    f = np.maximum(y_neg - y_pos + m, 0.0)
    inner = 1.0 + m - f
    assert np.all(inner > 0.0), "hinge exceeded 1 + m; probabilities out of range"
    return float(np.mean(-np.log(inner)))


def penalty(w, kind: str, lam: float) -> float:
    """Regularization term over the weight vector (bias excluded)."""
    w = np.asarray(w, dtype=np.float64)
    if kind == "none":
        return 0.0
    if kind == "l1":
        return float(lam * np.sum(np.abs(w)))
    if kind == "l2":
        return float(lam * np.sum(w * w))
    raise ValueError(f"unknown regularizer {kind!r}")


def penalty_grad(w, kind: str, lam: float) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if kind == "none":
        return np.zeros_like(w)
    if kind == "l1":
        return lam * np.sign(w)  # sign(0) = 0: no subgradient step at zero
    if kind == "l2":
        return 2.0 * lam * w
    raise ValueError(f"unknown regularizer {kind!r}")


# ---------------------------------------------------------------------------
# Batched objectives in logit space (numerically stable, exact gradients)

def batch_objective(w, b, x_pos, x_neg, config: TrainConfig):
    """Loss and gradients for one training batch under a sigmoid-family loss.

    The data term is summed over the batch's pairs and the regularization
    penalty on w is added once.  Summing (rather than averaging) keeps the
    data gradient and the fixed penalty at the published recipe's balance:
    with a per-pair mean, an unscaled lambda = 1 penalty exceeds the largest
    per-dimension data gradient that bounded features can produce and pins
    every weight at zero.  Returns (loss, grad_w, grad_b).  BCE uses the
    softplus form -ln sigma(z) = log(1 + exp(-z)), identical to the
    probability-space definition but stable at extreme logits.
    """
    w = np.asarray(w, dtype=np.float64)
    x_pos = np.asarray(x_pos, dtype=np.float64)
    x_neg = np.asarray(x_neg, dtype=np.float64)
    z_pos = x_pos @ w + b
    z_neg = x_neg @ w + b

    if config.loss == "bce_sigmoid":
        data = float(np.sum(np.logaddexp(0.0, -z_pos) + np.logaddexp(0.0, z_neg)))
        dz_pos = sigmoid(z_pos) - 1.0
        dz_neg = sigmoid(z_neg)
    elif config.loss == "triplet_mod":
        m = config.margin
        y_pos = sigmoid(z_pos)
        y_neg = sigmoid(z_neg)
        f = np.maximum(y_neg - y_pos + m, 0.0)
        inner = 1.0 + m - f
        data = float(np.sum(-np.log(inner)))
        df = np.where(f > 0.0, 1.0 / inner, 0.0)
        dz_pos = -df * y_pos * (1.0 - y_pos)
        dz_neg = df * y_neg * (1.0 - y_neg)
    else:
        raise ValueError(f"batch_objective does not handle loss {config.loss!r}")

    grad_w = x_pos.T @ dz_pos + x_neg.T @ dz_neg
    grad_b = float(np.sum(dz_pos) + np.sum(dz_neg))
    loss = data + penalty(w, config.regularizer, config.lam)
    grad_w = grad_w + penalty_grad(w, config.regularizer, config.lam)
    return loss, grad_w, grad_b


def batch_objective_softmax2(W, B, x_pos, x_neg, config: TrainConfig):
    """Two-logit softmax cross-entropy batch objective (the next-utterance
    baseline's formulation); W is (2, D), B is (2,), class 1 = relevant.

    Sum-aggregated like :func:`batch_objective`; the penalty covers both
    weight rows.  Returns (loss, grad_W, grad_B).
    """
    W = np.asarray(W, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    x_pos = np.asarray(x_pos, dtype=np.float64)
    x_neg = np.asarray(x_neg, dtype=np.float64)

    def ce(x, target):
        logits = x @ W.T + B  # (n, 2)
        mx = logits.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(logits - mx).sum(axis=1))
        loss = np.sum(lse - logits[:, target])
        p = np.exp(logits - mx)
        p /= p.sum(axis=1, keepdims=True)
        p[:, target] -= 1.0
        return loss, p

    loss_pos, dlogits_pos = ce(x_pos, 1)
    loss_neg, dlogits_neg = ce(x_neg, 0)
    data = float(loss_pos + loss_neg)
    grad_W = dlogits_pos.T @ x_pos + dlogits_neg.T @ x_neg
    grad_B = dlogits_pos.sum(axis=0) + dlogits_neg.sum(axis=0)
    loss = data + penalty(W.ravel(), config.regularizer, config.lam)
    grad_W = grad_W + penalty_grad(W, config.regularizer, config.lam)
    return loss, grad_W, grad_B


class _Adam:
    """Plain Adam; one instance per parameter tensor."""

    def __init__(self, shape, lr: float):
        self.lr = lr
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, param, grad):
        self.t += 1
        self.m = ADAM_BETA1 * self.m + (1.0 - ADAM_BETA1) * grad
        self.v = ADAM_BETA2 * self.v + (1.0 - ADAM_BETA2) * grad * grad
        m_hat = self.m / (1.0 - ADAM_BETA1 ** self.t)
        v_hat = self.v / (1.0 - ADAM_BETA2 ** self.t)
        return param - self.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def train(pairs: list[TrainingPair], config: TrainConfig) -> RelevanceModel:
    """Train the relevance head; a pure function of (pairs, config).

    Runs exactly ``config.epochs`` passes over a seeded shuffle of the pairs,
    minimizing the batch loss plus penalty with Adam.  Weights start at zero,
    so the only randomness is the shuffle order.  The softmax variant trains
    a (2, D) weight matrix and is exported collapsed to the equivalent single
    logit w = W[1] - W[0], b = B[1] - B[0].
    """
    config.validate()
    if not pairs:
        raise ValueError("no training pairs")
    dim = pairs[0].positive_feature.size
    for p in pairs:
        if p.positive_feature.size != dim or p.negative_feature.size != dim:
            raise ValueError(f"{p.context_id}: inconsistent feature dims")
    x_pos = np.stack([np.asarray(p.positive_feature, dtype=np.float64) for p in pairs])
    x_neg = np.stack([np.asarray(p.negative_feature, dtype=np.float64) for p in pairs])
    n = len(pairs)

    softmax = config.loss == "bce_softmax2"
    if softmax:
        W = np.zeros((2, dim))
        B = np.zeros(2)
        opt_w, opt_b = _Adam((2, dim), config.learning_rate), _Adam((2,), config.learning_rate)
    else:
        w = np.zeros(dim)
        b = 0.0
        opt_w, opt_b = _Adam((dim,), config.learning_rate), _Adam((), config.learning_rate)

    rng = np.random.default_rng(config.seed)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            if softmax:
                loss, gW, gB = batch_objective_softmax2(W, B, x_pos[idx], x_neg[idx], config)
            else:
                loss, gw, gb = batch_objective(w, b, x_pos[idx], x_neg[idx], config)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss {loss} at epoch {epoch}, batch offset {lo} "
                    f"(config {config.fingerprint()})"
                )
            if softmax:
                W = opt_w.step(W, gW)
                B = opt_b.step(B, gB)
            else:
                w = opt_w.step(w, gw)
                b = float(opt_b.step(b, gb))

    if softmax:
        w = W[1] - W[0]
        b = float(B[1] - B[0])
    model = RelevanceModel(weights=np.asarray(w, dtype=np.float64), bias=b,
                           config={**asdict(config), "fingerprint": config.fingerprint()})
    model.validate()
    return model


# ---------------------------------------------------------------------------
# Pair assembly, scoring, reporting helpers

def build_training_pairs(
    corpus: Corpus,
    store: FeatureStore,
    config: TrainConfig,
    lenient: bool = False,
) -> list[TrainingPair]:
    """Join stored features into training pairs for the configured negatives.

    Positives are the train-split human (gold) responses.  With fixed
    negatives, each pair's negative is the PAIR_NSP_NEG feature of that
    pair's own context and the j-th configured text, so negatives vary with
    context even though the text is constant.  With shuffled negatives the
    per-context ``::shuf`` record is used.
    """
    train = corpus.subset(split="train", source="human")
    groups = context_groups(train)
    pairs = []
    missing = []
    for cid, exs in groups:
        for ex in exs:
            pos = store.get(ex.id, config.feature_kind)
            if pos is None:
                missing.append(f"{ex.id} ({config.feature_kind})")
                continue
            if config.negatives == "fixed":
                neg_ids = [fixed_negative_id(cid, j) for j in range(len(config.negative_texts))]
            else:
                neg_ids = [shuffled_negative_id(cid)]
            for nid in neg_ids:
                neg = store.get(nid, "PAIR_NSP_NEG")
                if neg is None:
                    missing.append(f"{nid} (PAIR_NSP_NEG)")
                    continue
                pairs.append(TrainingPair(cid, pos.values, neg.values))
    if missing and not lenient:
        raise ValueError(f"missing training features: {', '.join(missing[:10])}"
                         + (f" and {len(missing) - 10} more" if len(missing) > 10 else ""))
    return pairs


def score(
    model: RelevanceModel,
    corpus: Corpus,
    store: FeatureStore,
    metric: str = "relhead",
    strict: bool = False,
) -> tuple[list[ScoredExample], list[str]]:
    """Apply the trained head to every example's pair feature (the kind the
    model was trained on, PAIR_NSP unless configured otherwise)."""
    kind = model.config.get("feature_kind", "PAIR_NSP")
    scores = []
    missing = []
    for ex in corpus.examples:
        rec = store.get(ex.id, kind)
        if rec is None:
            missing.append(ex.id)
            continue
        scores.append(ScoredExample(ex.id, metric, forward(model, rec.values)))
    if strict and missing:
        raise ValueError(f"missing {kind} features for: {', '.join(missing)}")
    return scores, missing


def rescale(scores, lo: float, hi: float) -> list[float]:
    """Min-max affine map of scores onto [lo, hi]; rank order is preserved."""
    arr = np.asarray(scores, dtype=np.float64)
    smin = float(arr.min())
    smax = float(arr.max())
    if smax <= smin:
        raise ValueError("constant scores: rescale range is degenerate")
    out = (arr - smin) / (smax - smin) * (hi - lo) + lo
    return [float(v) for v in out]


@dataclass
class WeightHistogram:
    counts: np.ndarray
    bin_edges: np.ndarray  # over log10 |w_i| of the nonzero weights
    zero_count: int


def weight_histogram(model: RelevanceModel, bins: int = 40) -> WeightHistogram:
    """Histogram of log10 weight magnitudes; exact zeros counted separately."""
    mags = np.abs(model.weights)
    nonzero = mags[mags > 0.0]
    zero_count = int(mags.size - nonzero.size)
    if nonzero.size == 0:
        return WeightHistogram(np.zeros(bins, dtype=int), np.linspace(-1, 0, bins + 1), zero_count)
    counts, edges = np.histogram(np.log10(nonzero), bins=bins)
    return WeightHistogram(counts, edges, zero_count)


# ---------------------------------------------------------------------------
# Model files

def save_model(model: RelevanceModel, path: str | Path) -> None:
    payload = {
        "D": model.dim,
        "weights": [float(v) for v in model.weights],
        "bias": model.bias,
        "config": model.config,
        "seed": model.config.get("seed"),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)
        f.write("\n")


def load_model(path: str | Path) -> RelevanceModel:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    weights = np.asarray(payload["weights"], dtype=np.float64)
    if weights.size != int(payload["D"]):
        raise ValueError(f"{path}: weight length {weights.size} != declared D {payload['D']}")
    model = RelevanceModel(weights=weights, bias=float(payload["bias"]),
                           config=dict(payload.get("config", {})))
    model.validate()
    return model
