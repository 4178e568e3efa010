"""Exception types shared across the toolkit."""


class ParameterError(ValueError):
    """An argument violates an operation's contract."""


class DataError(ValueError):
    """Input data violates a structural invariant (lengths, finiteness, monotonicity)."""


class UndefinedScaleError(DataError):
    """A scale-normalized score was requested but the normalizer is zero."""


class UnparseableVerdictError(ValueError):
    """A critic response carried no valid answer tag."""

    def __init__(self, raw: str):
        super().__init__("response contains no valid <answer> tag")
        self.raw = raw


class BackendError(RuntimeError):
    """A critic backend failed for good (exhausted retries, bad response shape)."""


class TransientBackendError(BackendError):
    """A transport-level failure worth retrying (timeouts, 429/5xx)."""


class ConfigError(ValueError):
    """Invalid or incomplete configuration (missing auth, bad config keys)."""
