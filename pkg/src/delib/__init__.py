"""Sentence-level FOIA Exemption 5 deliberative-process classification
pipeline: corpus handling, LLM prompting variants, multi-agent
orchestration, evaluation metrics, and linguistic indicator analysis."""

__version__ = "0.1.0"

from .corpus import Corpus, Sentence, corpus_stats, filter_batches, parse_dataset
from .prompting import Variant

__all__ = ["Corpus", "Sentence", "Variant", "corpus_stats", "filter_batches",
           "parse_dataset", "__version__"]
