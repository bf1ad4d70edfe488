"""Fully dynamic graph connectivity with a component hierarchy and sampled replacement search."""

from __future__ import annotations

from .connectivity import AuditReport, Engine, EngineConfig
from .errors import (
    ContractError, CorruptionError, DuplicateEdge, DynConnError, InvariantViolation, MissingEdge, SelfLoop,
    VertexRangeError,
)
from .oracle import OracleGraph

__all__ = [
    "AuditReport", "ContractError", "CorruptionError", "DuplicateEdge", "DynConnError", "Engine", "EngineConfig",
    "InvariantViolation", "MissingEdge", "OracleGraph", "SelfLoop", "VertexRangeError",
]
