"""Exception types shared across the engine."""

from __future__ import annotations


class BlockNasError(Exception):
    """Base class for every error raised by this package."""


class SpaceFormatError(BlockNasError):
    """Search-space file violates the JSON schema; message is path-qualified."""


class SpaceValidationError(BlockNasError):
    """A space failed invariant validation where a valid one is required."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid search space: " + "; ".join(self.violations))


class LibraryFormatError(BlockNasError):
    """Block-library file is malformed (not parseable as header + records)."""


class LibraryValidationError(BlockNasError):
    """Block-library content is inconsistent with its space (coverage, losses)."""


class ConfigurationError(BlockNasError):
    """An operation was configured with inputs it cannot work with."""


class CardinalityBoundError(BlockNasError):
    """Full materialization or exhaustive evaluation over a too-large space."""


class BudgetInfeasibleError(BlockNasError):
    """No front member fits the requested cost budget."""

    def __init__(self, message: str, cheapest_cost: float):
        self.cheapest_cost = cheapest_cost
        super().__init__(message)


class ReferencePointError(BlockNasError):
    """Hypervolume reference point not dominated by every front point."""


class TransportError(BlockNasError):
    """Measurement endpoint unreachable after the retry budget."""


class ProtocolError(BlockNasError):
    """Measurement endpoint answered outside the wire protocol."""
