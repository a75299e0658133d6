"""The closed-form baselines: cosine similarity, normalized conditional
log-probability, and follow-up scoring.

Each baseline consumes stored model artifacts rather than running models
itself, so this demo fabricates the artifacts directly.
"""
import numpy as np

from dialrel.baselines import cosine, fed_score, norm_prob

# Cosine of a context vector and a response vector, any embedding flavor.
rng = np.random.default_rng(1)
ctx_vec = rng.normal(size=32)
on_topic = ctx_vec + 0.3 * rng.normal(size=32)      # near the context
off_topic = rng.normal(size=32)                     # unrelated
print(f"cosine, on-topic response : {cosine(ctx_vec, on_topic):+.3f}")
print(f"cosine, off-topic response: {cosine(ctx_vec, off_topic):+.3f}")

# Normalized conditional log-probability: per-token mean log-probs, clipped
# at the batch 5th percentile and mapped onto [0, 1].  Batch-relative by
# construction; one (dataset, split) is scored at a time.
batch = []
for i in range(200):
    token_count = int(rng.integers(3, 25))
    per_token = -float(np.abs(rng.normal(2.5, 1.2)))
    batch.append((f"resp{i:03d}", per_token * token_count, token_count))
batch.append(("fluent", -0.2 * 8, 8))     # unusually likely response
batch.append(("word-salad", -9.0 * 8, 8))  # unusually unlikely response

scores, batch_stats = norm_prob(batch)
by_id = {s.example_id: s.score for s in scores}
print(f"\nnorm-prob batch 5th percentile of per-token log-prob: {batch_stats.c5th:.3f}")
print(f"  fluent response     -> {by_id['fluent']:.3f}")
print(f"  word salad          -> {by_id['word-salad']:.3f} (clipped to 0)")
n_zero = sum(1 for s in scores if s.score == 0.0)
print(f"  {n_zero}/{len(scores)} responses at/below the percentile score exactly 0")

# Follow-up scoring: how plausible would canned irrelevance follow-ups be
# after this response?  The more likely they are, the less relevant the
# response, hence the negated sum.
followups_after_good = [("f0", -9.1), ("f1", -11.6)]   # follow-ups unlikely
followups_after_bad = [("f0", -2.3), ("f1", -3.0)]     # follow-ups plausible
print(f"\nfollow-up score, relevant response  : {fed_score(followups_after_good):.1f}")
print(f"follow-up score, irrelevant response: {fed_score(followups_after_bad):.1f}")
print("(higher = the irrelevance follow-ups were less expected = more relevant)")
