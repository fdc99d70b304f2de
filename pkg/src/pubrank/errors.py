"""Exception hierarchy shared across the pipeline.

Exit-code mapping used by the CLI: UsageError -> 1, DataError -> 2,
ServiceError -> 3.
"""


class PubrankError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(PubrankError):
    """Bad invocation or configuration (CLI exit code 1)."""


class DataError(PubrankError):
    """Invalid or corrupt data: corpus, run files, gold files (exit code 2)."""


class CorruptIndexError(DataError):
    """Index file failed checksum or structural validation."""


class ServiceError(PubrankError):
    """Remote model service failed after retries (exit code 3)."""


class ProtocolError(ServiceError):
    """Remote service answered with a malformed or contract-violating body."""


class FixtureError(ServiceError):
    """Fixture store misuse: missing recording in replay mode, bad fixture file."""


class AnswerParseError(DataError):
    """Model output could not be reduced to the required exact-answer shape.

    Callers record the failure and score the prediction as wrong; this is
    never a pipeline-fatal condition.
    """
