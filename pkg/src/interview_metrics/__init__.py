"""Linguistic-quality analytics for AI-conducted vs. human-conducted interviews.

Modules
-------
corpus
    Transcript ingest, filtering and sentence segmentation.
lexical
    Subword tokenization, length truncation and Shannon entropy.
semantic
    Embedding providers and cache, cosine-similarity aggregates.
stats
    Welch t, Mann-Whitney U, Cohen's d and group comparison tables.
causal
    Propensity scores, Gaussian kernel matching, matched-sample ATE, balance.
pipeline, cli
    The staged ``ivmetrics`` command.
"""

__version__ = "0.1.0"
