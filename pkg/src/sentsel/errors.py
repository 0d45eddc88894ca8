"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures
to its documented exit statuses without a lookup table.
"""

from __future__ import annotations


class SentselError(Exception):
    exit_code = 2


class ConfigError(SentselError):
    """Invalid parameters or configuration (usage error)."""

    exit_code = 1


class DataError(SentselError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class EmptyInput(DataError):
    pass


class UnknownCategory(DataError):
    def __init__(self, value, row=None):
        self.value = value
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"unknown impact category {value!r}{where}")


class MissingField(DataError):
    def __init__(self, field, row=None):
        self.field = field
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"missing field {field!r}{where}")


class SchemaError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidRatios(ConfigError):
    pass


class InvalidChunkConfig(ConfigError):
    pass


class SingleSentenceDocument(DataError):
    pass


class NoLabeledData(DataError):
    pass


class MissingSignal(DataError):
    def __init__(self, source, detail=""):
        self.source = source
        msg = f"missing signal for source {source!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class LengthMismatch(DataError):
    pass


class AllZeroGains(DataError):
    pass


class DocIdMismatch(DataError):
    pass


class MalformedResponse(DataError):
    pass


class UnknownLabel(DataError):
    pass


class EmptySpecies(DataError):
    pass


class BackendError(SentselError):
    """A scorer backend failed or returned an unusable payload."""

    exit_code = 3

    def __init__(self, message, chunk_index=None):
        self.chunk_index = chunk_index
        if chunk_index is not None:
            message = f"chunk {chunk_index}: {message}"
        super().__init__(message)


class ClientError(SentselError):
    """A generation client failed."""

    exit_code = 3
