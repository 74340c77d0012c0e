"""Empathetic dialogue generation and evaluation."""

from ._empathy import (
    Error,
    ParseError,
    ProviderError,
    UndefinedCorrelationError,
    UndefinedMetricError,
    ValidationError,
    aspect_definition,
    bert_score,
    corpus_bleu,
    cosine_similarity,
    distinct_n,
    kendall_tau,
    mock_embedding,
    parse_judge_verdict,
    run_cli,
    spearman,
    tokenize,
)

__all__ = [
    "Error",
    "ParseError",
    "ProviderError",
    "UndefinedCorrelationError",
    "UndefinedMetricError",
    "ValidationError",
    "aspect_definition",
    "bert_score",
    "corpus_bleu",
    "cosine_similarity",
    "distinct_n",
    "kendall_tau",
    "mock_embedding",
    "parse_judge_verdict",
    "run_cli",
    "spearman",
    "tokenize",
]
