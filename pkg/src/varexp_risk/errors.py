"""Exception hierarchy.

Input problems (bad probabilities, exponents, utilities, levels) derive from
``ValidationError`` so callers such as the CLI can map them to one exit code.
"""


class ValidationError(ValueError):
    """Invalid input: violates a construction invariant or a precondition."""


class LevelError(ValidationError, IndexError):
    """Filtration level outside ``0..T`` or an invalid ``(t, t+s)`` pair."""


class InadmissibleUtility(ValidationError):
    pass


class InfeasibleDensity(ValidationError):
    pass


class NotInvertible(ValidationError):
    """The utility core has a flat region, so its inverse is undefined."""


class StrategyUnavailable(ValidationError):
    pass


class ContractViolation(RuntimeError):
    """A numerical contract was checked and found violated."""
