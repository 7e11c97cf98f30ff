"""Crowd-based evaluation of word-level saliency explanations for text classifiers.

The package covers the whole pipeline: a small self-attention classifier with
its own reverse-mode autodiff, seven saliency methods plus a random baseline,
top-k masked-word task generation, an HTTP annotation service, majority-vote
aggregation with difficulty-weighted method scores, and the analytics reports
(flips, overlap, sufficiency/comprehensiveness, misclassified cases).
"""

__version__ = "0.1.0"
