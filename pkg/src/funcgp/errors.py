"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid user input: shapes, options, or file contents."""


class NumericalError(RuntimeError):
    """Numerical failure that survived the configured retries."""


class FactorizationError(NumericalError):
    """Covariance matrix stayed indefinite after jitter escalation."""


class FitError(NumericalError):
    """No optimizer restart produced a usable maximum."""


class AnalyticGradientUnavailable(ValueError):
    """Closed-form kernel derivatives do not exist for this configuration."""
