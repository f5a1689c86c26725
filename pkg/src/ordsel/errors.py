"""Exception hierarchy shared by every ordsel module."""


class OrdselError(Exception):
    """Base class for all library errors."""


class DomainError(OrdselError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class RankDeficiencyError(OrdselError, ValueError):
    """A design column is (numerically) in the span of the preceding ones.

    Attributes
    ----------
    column : int
        1-based index of the offending column.
    """

    def __init__(self, column: int, message: str | None = None):
        self.column = column
        super().__init__(message or f"design is rank deficient at column {column}")


class DegenerateFitError(OrdselError):
    """The slope-heuristic fit did not produce a negative slope."""


class SaturatedModelError(OrdselError):
    """The (estimated) true dimension equals q, so every FDR bound is 0."""


class CalibrationFailed(OrdselError):
    """No grid value satisfies the FDR-bound constraint.

    The bound curve that was evaluated is attached as ``curve`` so a caller can
    retry with a larger ``alpha`` or ``gamma``.
    """

    def __init__(self, message: str, curve=None, diff_pr=None):
        super().__init__(message)
        self.curve = curve
        self.diff_pr = diff_pr


class ConfigError(OrdselError, ValueError):
    """A configuration file or object failed to parse or validate."""


class RankDeficiencyWarning(UserWarning):
    """Some fold or dimension was skipped because its design was rank deficient."""
