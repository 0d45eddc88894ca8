"""Sentence selection for efficient classification of long scientific full texts."""

from .corpus import Document, ImpactCategory, Sentence, segment_sentences, reference_tokenize
from .selection import SelectionConfig, SentenceRanking

__version__ = "0.1.0"

__all__ = [
    "Document",
    "ImpactCategory",
    "Sentence",
    "SelectionConfig",
    "SentenceRanking",
    "reference_tokenize",
    "segment_sentences",
]
