"""
transmatch-lab: a desk-scale laboratory for semi-supervised few-shot learning.

Pipeline: pre-train a feature extractor on base classes, imprint cosine
classifier weights for novel classes, then fine-tune with MixMatch using
unlabeled images of the novel classes.
"""

__version__ = "0.1.0"
