"""Exception types shared by every layer of the engine."""

from __future__ import annotations


class DynConnError(Exception):
    """Base class for all engine errors."""


class ContractError(DynConnError):
    """A caller violated an operation's precondition."""


class VertexRangeError(ContractError):
    pass


class SelfLoop(ContractError):
    pass


class DuplicateEdge(ContractError):
    pass


class MissingEdge(ContractError):
    pass


class EmptyStore(ContractError):
    pass


class EmptyPool(ContractError):
    pass


class NoParent(ContractError):
    pass


class CounterRangeError(ContractError):
    pass


class CorruptionError(DynConnError):
    """Internal structure is inconsistent (a dangling chain, a missing record...)."""


class InvariantViolation(DynConnError):
    """An audited invariant does not hold."""
