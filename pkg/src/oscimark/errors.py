"""Exception hierarchy shared by every stage of the toolchain."""


class OscimarkError(Exception):
    """Base class for all errors raised by oscimark."""

    #: category printed by the command line front end
    category = "error"


class ParameterError(OscimarkError, ValueError):
    category = "parameter"


class ConfigurationError(OscimarkError, ValueError):
    category = "configuration"


class InsufficientDataError(OscimarkError, ValueError):
    category = "insufficient-data"


class DataIntegrityError(OscimarkError, ValueError):
    category = "data-integrity"


class ParseError(OscimarkError, ValueError):
    category = "parse"


class MontageMismatchError(OscimarkError, ValueError):
    category = "montage-mismatch"


class SchemaError(OscimarkError, ValueError):
    category = "schema"


class DegenerateBaselineError(OscimarkError, ValueError):
    """Baseline score sits at the scale floor, so the endpoint is undefined."""

    category = "degenerate-baseline"


class UndefinedCorrelationError(OscimarkError, ValueError):
    category = "undefined-correlation"


class EmptySelectionError(OscimarkError):
    """Stability selection retained no feature; the pipeline cannot go on."""

    category = "empty-selection"
