"""Retrieval-augmented translation toolkit for low-resource languages."""

from ._core import (  # noqa: F401
    ConfigError,
    DataError,
    MockTranslator,
    OfflineEmbedder,
    RemoteError,
    adapted_forward,
    apply_adapter,
    bertscore,
    bleu,
    cosine_similarity,
    delta_w,
    init_adapter,
    metric_tokens,
    normalize_term,
    parse_lexicon,
    planted_rank1_training,
    query_terms,
    rouge_l,
    rouge_n,
    trainable_param_count,
)

__version__ = "0.3.0"
