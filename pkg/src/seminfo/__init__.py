"""Unsupervised constituency parsing driven by paraphrase-derived span scores."""

__version__ = "0.1.0"
