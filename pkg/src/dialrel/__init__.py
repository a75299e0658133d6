"""Dialogue relevance metrics over frozen encoder features.

Subpackages cover the full workflow: normalizing annotated corpora
(:mod:`dialrel.corpus`), exchanging model-derived features with an external
extractor (:mod:`dialrel.featurestore`), the prior closed-form metrics
(:mod:`dialrel.baselines`), the sparse logistic relevance head
(:mod:`dialrel.relhead`), the correlation/significance harness
(:mod:`dialrel.stats`), and the feature-dimensionality probe
(:mod:`dialrel.nspprobe`).  ``dialrel`` on the command line orchestrates all
of it.
"""

__version__ = "0.1.0"
