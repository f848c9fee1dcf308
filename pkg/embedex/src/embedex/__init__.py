"""Per-word embedding sets and surprisal columns from pretrained encoders,
written in the shared binary embedding format."""

from .alignment import Utterance, Word, load_alignment
from .encoders import (
    KIND_FOR_CONTEXT,
    Encoder,
    Token,
    VectorTableEncoder,
    register_encoder,
    resolve_encoder,
    whitespace_tokens,
)
from .errors import AlignmentError, EncoderError, ExtractorError, JobError
from .extract import (
    CONTEXT_TYPES,
    ExtractionJob,
    ExtractionResult,
    SurprisalResult,
    extract_embeddings,
    extract_surprisal,
    word_spans,
    write_embedding_file,
)

__all__ = [
    "AlignmentError",
    "CONTEXT_TYPES",
    "Encoder",
    "EncoderError",
    "ExtractionJob",
    "ExtractionResult",
    "ExtractorError",
    "JobError",
    "KIND_FOR_CONTEXT",
    "SurprisalResult",
    "Token",
    "Utterance",
    "VectorTableEncoder",
    "Word",
    "extract_embeddings",
    "extract_surprisal",
    "load_alignment",
    "register_encoder",
    "resolve_encoder",
    "whitespace_tokens",
    "word_spans",
    "write_embedding_file",
]
