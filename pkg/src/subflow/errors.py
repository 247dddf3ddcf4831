"""Domain-specific exceptions shared across the package."""


class SubflowError(Exception):
    """Base class for all subflow-specific failures."""


class DegenerateRuleError(SubflowError):
    """Every predicate weight is zero, so the conjunction is undefined."""


class EmptySubgroupError(SubflowError):
    """Soft membership mass collapsed below the usable floor."""


class DegenerateDataError(SubflowError):
    """Data is too small or too uniform for the requested estimate."""


class NonFiniteGradientError(SubflowError):
    """An optimizer step received NaN or infinite gradients."""
