"""Exception hierarchy shared by all modules."""


class PatchEnsembleError(Exception):
    """Base class for every error raised by this package."""


class InvalidImage(PatchEnsembleError, ValueError):
    pass


class ImageTooSmall(PatchEnsembleError, ValueError):
    pass


class OutOfBounds(PatchEnsembleError, ValueError):
    pass


class InvalidParameter(PatchEnsembleError, ValueError):
    pass


class CodecFailure(PatchEnsembleError, RuntimeError):
    pass


class ModelLoadError(PatchEnsembleError, RuntimeError):
    pass


class ShapeMismatch(PatchEnsembleError, ValueError):
    pass


class ScoringError(PatchEnsembleError, RuntimeError):
    """A scorer failed; ``index`` is the offending patch position (or None)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class EmptyScores(PatchEnsembleError, ValueError):
    pass


class EmptyEnsemble(PatchEnsembleError, ValueError):
    pass


class SingleClass(PatchEnsembleError, ValueError):
    pass


class UnknownRecipe(PatchEnsembleError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown recipe"


class EmptyAfterFilter(PatchEnsembleError, ValueError):
    pass


class ConfigError(PatchEnsembleError, ValueError):
    pass


class SpecError(PatchEnsembleError, ValueError):
    pass
