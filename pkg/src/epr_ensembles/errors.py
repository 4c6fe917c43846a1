"""Exception types raised across the package."""


class EnsembleToolkitError(ValueError):
    """Base class for every error raised by this package."""


class InvalidStateError(EnsembleToolkitError):
    pass


class InvalidAxisError(EnsembleToolkitError):
    pass


class EmptyEnsembleError(EnsembleToolkitError):
    pass


class AlignmentError(EnsembleToolkitError):
    pass


class ConventionError(EnsembleToolkitError):
    """Input violates a counting convention (e.g. odd N where even is required)."""


class CausalityError(EnsembleToolkitError):
    """An event consumed message content before the message arrived."""


class ConfigError(EnsembleToolkitError):
    """Invalid experiment configuration.

    ``field`` names the offending flag, key or token.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
