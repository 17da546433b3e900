"""Exception types shared across the engine."""


class RevkitError(Exception):
    """Base class for all engine errors."""


class ValidationError(RevkitError):
    """Caller supplied inputs that violate a precondition."""


class MalformedDocument(ValidationError):
    """Contract text could not be segmented into provisions."""


class UnbalancedMarkers(ValidationError):
    """Tracked-edit markers do not pair up."""


class DimMismatch(ValidationError):
    """Vectors of different dimension were combined."""


class ZeroVector(ValidationError):
    """Cosine similarity is undefined for an all-zero vector."""


class EmptyStore(RevkitError):
    """Operation requires at least one (matching) record in the store."""


class ProviderUnavailable(RevkitError):
    """Transport-level failure reaching a provider endpoint."""


class ProviderError(RevkitError):
    """Provider responded, but with a non-success status or bad payload."""


class ScorerUnavailable(RevkitError):
    """Cross-encoder scorer endpoint could not be reached."""


class MalformedLLMOutput(RevkitError):
    """LLM reply did not contain the expected structure."""


class InsufficientData(ValidationError):
    """Not enough labeled examples to build the requested pairs."""


class InsufficientDemonstrations(RevkitError):
    """Fewer pairable demonstration triples than requested."""


class AllCandidatesMalformed(RevkitError):
    """Every sampled rewrite candidate was unusable."""


class TooFewPoints(ValidationError):
    """Training requires more points than were supplied."""


class TooFewVectors(ValidationError):
    """Moment computation requires at least two vectors."""


class EmptyTestSet(ValidationError):
    """Classifier evaluation received no test records."""


class EmptySet(ValidationError):
    """Metric requested over an empty collection."""


class UnknownGoldId(ValidationError):
    """Evaluation references a gold revision id absent from the store."""


class WorkspaceError(RevkitError):
    """Workspace directory is missing or inconsistent."""
