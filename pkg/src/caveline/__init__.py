"""Weakly-supervised caveline segmentation toolkit."""

__version__ = "0.1.0"
