"""Exception hierarchy, mapped to CLI exit codes (input=1, numerical=2, config=3)."""


class NewsCohesionError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InputError(NewsCohesionError):
    """Malformed or inconsistent input data."""

    exit_code = 1


class ParseError(InputError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, path, line_no, message):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class VocabularyConflictError(InputError):
    """Two entities share a normalized surface form."""


class IntegrityError(InputError):
    """Data violates a structural invariant (ids out of range, bad bucket...)."""


class EmptyBucketError(InputError):
    """Cohesion requested for a bucket with zero documents."""


class AlignmentError(InputError):
    """Series calendars admit no joint rows."""


class DegenerateSeriesError(InputError):
    """A statistical operation received a constant / zero-variance series."""


class CollinearityError(NewsCohesionError):
    """Regressor matrix is singular; names the offending lag columns."""

    exit_code = 2

    def __init__(self, columns, message=None):
        self.columns = list(columns)
        super().__init__(message or f"collinear regressors: {', '.join(self.columns)}")


class NumericalError(NewsCohesionError):
    """A numerical routine failed to produce a usable result."""

    exit_code = 2


class ConfigError(NewsCohesionError):
    """Run configuration is invalid (missing paths, bad ranges, unknown keys)."""

    exit_code = 3
