"""Exception hierarchy shared by all modules."""


class EvosisError(Exception):
    """Base class for package errors."""


class DomainError(EvosisError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class QuadratureError(EvosisError, ArithmeticError):
    """Adaptive quadrature failed to converge to the requested tolerance."""


class CondpValidationError(EvosisError, AssertionError):
    """The growth-condition witnesses failed on a sampled point."""


class RegimeError(EvosisError, ValueError):
    """An operation was called outside the regime it is defined for."""


class FeasibilityError(EvosisError, ValueError):
    """A survival strategy is not feasible at the requested parameters."""


class CoverageError(EvosisError, RuntimeError):
    """No formula branch or strategy covers a point that must be covered."""


class CapacityError(EvosisError, MemoryError):
    """The adjacency pool cannot hold the graph."""


class ConsistencyError(EvosisError, AssertionError):
    """Incremental bookkeeping diverged from a from-scratch recount."""


class ConfigError(EvosisError, ValueError):
    """Invalid experiment or command-line configuration."""
