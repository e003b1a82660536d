"""Prosody-augmented span-based constituency parser for speech transcripts."""

__version__ = "0.1.0"

from .treebank import (  # noqa: F401
    InternalNode,
    LabelVocab,
    LabeledSpan,
    LeafNode,
    classify_fluency,
    parse_ptb,
    spans_to_tree,
    speechify,
    tree_to_spans,
)
from .chart import cky_decode, margin_loss, score_spans  # noqa: F401
from .evaluation import paired_bootstrap, parseval  # noqa: F401
from .model import ModelConfig, ParserModel  # noqa: F401
