"""Adversarially trained self-supervised featurizer for high-content screens."""

__version__ = "0.1.0"
