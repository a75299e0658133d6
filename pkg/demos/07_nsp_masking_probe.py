"""How many pooled-feature dimensions does the NSP classifier really need?

A trained relevance head orders the feature dimensions by weight magnitude.
The probe zeroes everything outside the top-k and re-runs the pretrained
next-sentence classifier on the masked features.  With real pretrained
features, accuracy survives k as small as 7 of 768; on this demo's synthetic
head the interesting part is the mechanics: the mask applies to features,
the classifier itself is never touched, and k = D is exactly the identity.
"""
import numpy as np

from dialrel.featurestore import NspHead
from dialrel.nspprobe import IS_NEXT, NOT_NEXT, nsp_accuracy, nsp_predict, top_k_mask
from dialrel.relhead import RelevanceModel

D = 64
rng = np.random.default_rng(0)

# A synthetic "pretrained" classifier that mostly reads 6 specific dims,
# plus faint weights everywhere else.
important = rng.choice(D, size=6, replace=False)
head_w = rng.normal(0, 0.02, size=(2, D))
head_w[0, important] += 1.0   # row 0 scores is_next
head_w[1, important] -= 1.0
head = NspHead(weight=head_w, bias=np.array([0.0, 0.0]), d=D)

# Labelled evaluation pairs whose signal lives in those same dims.
pairs = []
for _ in range(400):
    is_next = rng.random() < 0.5
    x = rng.normal(0, 0.5, size=D)
    x[important] += 0.9 if is_next else -0.9
    pairs.append((x, IS_NEXT if is_next else NOT_NEXT))

# A relevance head trained on such features ends up weighting the same dims;
# emulate one with matching magnitudes.
relevance_w = rng.normal(0, 0.005, size=D)
relevance_w[important] = rng.choice([-1.0, 1.0], size=6) * 0.2
model = RelevanceModel(weights=relevance_w, bias=0.0, config={})

print(f"baseline accuracy, no mask: {nsp_accuracy(head, pairs):.3f}\n")
print("k    kept dims                     accuracy")
for k in (1, 3, 6, 12, D):
    mask = top_k_mask(model, k)
    kept = np.flatnonzero(mask)
    shown = ", ".join(map(str, kept[:6])) + (", ..." if k > 6 else "")
    print(f"{k:<4d} [{shown:<28s}] {nsp_accuracy(head, pairs, mask):.3f}")

mask_full = top_k_mask(model, D)
assert nsp_accuracy(head, pairs, mask_full) == nsp_accuracy(head, pairs)
print("\nk = D mask reproduces the unmasked accuracy exactly.")

x = pairs[0][0]
print(f"single prediction on a masked feature: "
      f"{nsp_predict(head, x, top_k_mask(model, 6))}")
