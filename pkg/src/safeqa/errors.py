"""Exception hierarchy for the engine."""


class SafeqaError(Exception):
    """Base class for engine errors."""


class CorpusError(SafeqaError):
    pass


class RetrievalError(SafeqaError):
    pass


class ProviderError(SafeqaError):
    """Provider call failed. `retriable` marks timeouts/5xx-style failures."""

    def __init__(self, message: str, retriable: bool = False):
        super().__init__(message)
        self.retriable = retriable


class ModerationError(SafeqaError):
    """Moderation-queue failure. `code` distinguishes not_found / not_open /
    rail_rejected so callers can map to transport errors; `verdict` carries
    the rail trace on rejection."""

    def __init__(self, message: str, code: str = "error", verdict=None):
        super().__init__(message)
        self.code = code
        self.verdict = verdict


class ConfigError(SafeqaError):
    pass
