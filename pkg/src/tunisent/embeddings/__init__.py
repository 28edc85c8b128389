"""Word representations: self-trained word2vec, pretrained word vectors, contextual subwords."""

from .contextual import (
    ContextualProvider,
    EmbeddingSource,
    ProviderUnavailable,
    WordPieceTokenizer,
    encode_contextual,
)
from .static import (
    PAD,
    UNK,
    DimensionMismatch,
    EmbeddingMatrix,
    FormatError,
    SequenceEncoding,
    Vocabulary,
    encode_static,
    load_embeddings,
    load_pretrained,
    save_embeddings,
)
from .word2vec import EmptyCorpus, InvalidHyperparameter, Word2VecParams, train_word2vec

__all__ = [
    "PAD",
    "UNK",
    "ContextualProvider",
    "DimensionMismatch",
    "EmbeddingMatrix",
    "EmbeddingSource",
    "EmptyCorpus",
    "FormatError",
    "InvalidHyperparameter",
    "ProviderUnavailable",
    "SequenceEncoding",
    "Vocabulary",
    "Word2VecParams",
    "WordPieceTokenizer",
    "encode_contextual",
    "encode_static",
    "load_embeddings",
    "load_pretrained",
    "save_embeddings",
    "train_word2vec",
]
