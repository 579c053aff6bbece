"""Exception taxonomy shared across the package.

CLI exit-code mapping: ConfigError -> 2, NumericError -> 3,
VerificationError -> 4.
"""


class HslabError(Exception):
    """Base class for all package errors."""


class ConfigError(HslabError):
    """Invalid configuration or unsupported family/mode combination."""


class SchemaError(ConfigError):
    """Config file violates the schema; message carries the field path."""


class DomainError(ConfigError):
    """Parameters are schema-valid but mathematically inadmissible."""


class NumericError(HslabError):
    """Base class for runtime numerical failures."""


class BracketError(NumericError):
    """Target value lies outside the bracketing interval."""


class NonMonotoneError(NumericError):
    """A sampled monotonicity violation was detected."""


class DivergentIntegralError(NumericError):
    """Adaptive refinement exceeded its depth limit without converging."""


class ZeroMassError(NumericError):
    """An operation required strictly positive integral mass."""


class WindowExhaustedError(NumericError):
    """Grid iteration left the representable range before covering the window."""


class NonTerminationError(NumericError):
    """An iterative construction failed to terminate within its step cap."""


class ConvergenceError(NumericError):
    """A singular-value computation did not converge."""


class BudgetError(NumericError):
    """A construction exceeded its configured size budget."""


class VerificationError(HslabError):
    """A verification battery reported failures."""


class NonMonotoneWarning(UserWarning):
    """An assumed-monotone scan detected a non-monotone stretch."""
