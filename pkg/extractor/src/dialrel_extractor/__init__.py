"""Model-side feature extraction for the dialrel relevance toolkit.

Reads extraction manifests and writes feature stores and NSP-head exports in
the toolkit's documented file formats; the two packages share no code, only
those contracts.
"""

__version__ = "0.1.0"
