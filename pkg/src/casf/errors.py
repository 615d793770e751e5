"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Arguments violate a documented precondition (shape, dimension, range)."""


class DemoParseError(InvalidInputError):
    """A demonstration CSV is malformed; message names the offending row."""


class TrainingDivergenceError(RuntimeError):
    """A training loss or gradient became non-finite."""


class IntegrationDivergenceError(RuntimeError):
    """An ODE state became non-finite during rollout."""


class DegenerateMetricError(RuntimeError):
    """A metric tensor failed its positive-definite factorization."""


class ProjectionFailureError(RuntimeError):
    """Hard projection hit a degenerate gradient while penetrating."""


class FilterFailureError(RuntimeError):
    """CBF filtering hit a degenerate gradient on an active constraint."""


class UnsupportedMetricError(RuntimeError):
    """A penetration metric was asked to score against an unsigned field."""


class RenderError(RuntimeError):
    """Field rendering was requested for an unsupported dimension."""
