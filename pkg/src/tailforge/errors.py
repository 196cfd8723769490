"""Exception hierarchy. Validation errors map to CLI exit code 1, runtime failures to 2."""


class TailforgeError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(TailforgeError, ValueError):
    pass


class DegenerateInput(InvalidArgument):
    """Input is well-typed but numerically degenerate (e.g. a zero-norm vector)."""


class ShapeMismatch(InvalidArgument):
    pass


class MalformedManifest(InvalidArgument):
    pass


class MissingPayload(TailforgeError, FileNotFoundError):
    def __init__(self, path):
        super().__init__(f"missing payload file: {path}")
        self.path = str(path)


class TrainingDiverged(TailforgeError, RuntimeError):
    """Raised when a loss or gradient becomes non-finite; carries the step diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
