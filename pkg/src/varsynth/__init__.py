"""Synthetic parallel data for a low-resource language variant.

Turns an F-E parallel corpus into an F-F'-E corpus by replacing F words
with F' words found through local embedding projections.
"""
from .alignment import AlignmentLinks, SentencePair, alignment_stats, parse_pharaoh
from .ann import KnnResult, MrptIndex, exact_knn, recall_at_k
from .corpus_filter import DecisionTree, extract_features, filter_corpus, train_tree
from .embeddings import EmbeddingTable, compose_additive, cosine_similarity, load_word2vec_text
from .generator import (
    EmbeddingSpace,
    GenerationConfig,
    Outcome,
    Spaces,
    generate_corpus,
    generate_sentence,
    substitute_word,
)
from .lexicon import Lexicon, induce_from_alignments, load_lexicon_tsv

__version__ = "0.1.0"
