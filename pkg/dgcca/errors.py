"""Exception and warning types raised by dgcca."""

from typing import Any


class DgccaError(Exception):
    """Base class for every failure dgcca reports.

    Each subclass carries a stable ``code`` so the CLI can emit a
    machine-readable error object.
    """

    code = "dgcca_error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        """Serialize to dictionary."""
        return {
            "error": self.code,
            "message": self.message,
            "details": self.details,
        }


class ParseError(DgccaError):
    """Input file is not a rectangular numeric table."""

    code = "parse_error"


class EmptyInput(DgccaError):
    """Input file holds no data."""

    code = "empty_input"


class ShapeError(DgccaError):
    """Dimensions of inputs disagree."""

    code = "shape_error"


class ArityError(DgccaError):
    """Wrong number of views, ranks or signals."""

    code = "arity_error"


class RankError(DgccaError):
    """Requested rank is outside the admissible range."""

    code = "rank_error"


class NumericsError(DgccaError):
    """Non-finite values or a covariance that is not positive semidefinite."""

    code = "numerics_error"


class SignSelectionError(DgccaError):
    """No alpha candidate carries the required sign."""

    code = "sign_selection_error"


class DegenerateInput(DgccaError):
    """Input without variation where variation is required."""

    code = "degenerate_input"


class ConfigError(DgccaError):
    """Invalid configuration value."""

    code = "config_error"


class InternalError(DgccaError):
    """Unexpected failure outside the checked input and numeric paths."""

    code = "internal_error"


class DegenerateSpectrumWarning(UserWarning):
    """Near-tied eigenvalues or degenerate test inputs; results may not be unique."""
