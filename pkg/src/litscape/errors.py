"""Exception hierarchy. Each class carries the CLI exit code for its error class."""


class LitscapeError(Exception):
    exit_code = 1


class ConfigError(LitscapeError):
    exit_code = 2


class InvalidArgumentError(LitscapeError, ValueError):
    exit_code = 2


class NetworkError(LitscapeError):
    exit_code = 3


class BackendError(LitscapeError):
    exit_code = 4


class ExtractionError(BackendError):
    pass


class EmbeddingError(BackendError):
    def __init__(self, message, failed=()):
        super().__init__(message)
        self.failed = list(failed)


class DegenerateEmbeddingError(EmbeddingError):
    pass


class DataIntegrityError(LitscapeError):
    exit_code = 5


class FeedParseError(DataIntegrityError):
    def __init__(self, message, entry_index=None):
        super().__init__(message)
        self.entry_index = entry_index


class EmptyCorpusError(DataIntegrityError):
    pass


class EmptyPaperError(DataIntegrityError):
    pass
