"""revkit: retrieval-augmented contract revision engine."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    Contract,
    ContractKind,
    EditScript,
    Label,
    Provision,
    Revision,
    Source,
    detect_tracked_edits,
    diff_words,
    parse_contract,
    weak_label,
)
from .embedding import (  # noqa: F401
    EmbeddingRecord,
    EmbeddingVector,
    Metric,
    VectorStore,
    cosine,
    embed_texts,
    l2,
)
