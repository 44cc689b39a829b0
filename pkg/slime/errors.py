"""Exception hierarchy shared by the pipeline stages and the CLI."""


class SlimeError(Exception):
    """Base class for every error the CLI knows how to report."""

    exit_code = 2


class ConfigError(SlimeError, ValueError):
    """Bad invocation or config file. Reported as a usage error."""

    exit_code = 1


class DataError(SlimeError, ValueError):
    """Input data violates a documented format or precondition."""


class CorpusError(DataError):
    pass


class DictionaryError(DataError):
    pass


class InterchangeError(DataError):
    pass


class ModelError(DataError):
    pass


class AttributionError(DataError):
    pass


class StatsError(DataError):
    pass


class ReportError(SlimeError, OSError):
    """Output could not be written; the message names the path."""
