"""Service layer: workspace persistence, engine, HTTP API, CLI."""

from .engine import DecisionConflict, Engine, UnknownId  # noqa: F401
from .workspace import (  # noqa: F401
    ConfidenceBand,
    FlagRecord,
    FlagStatus,
    ReviewDecision,
    Verdict,
    Workspace,
)
