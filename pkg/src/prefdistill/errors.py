"""Exception types shared across the package."""


class PrefDistillError(Exception):
    """Base class for all package errors."""


class ParameterError(PrefDistillError, ValueError):
    pass


class ShapeError(PrefDistillError, ValueError):
    pass


class LabelError(PrefDistillError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ViewError(PrefDistillError, ValueError):
    pass


class AnnotationError(PrefDistillError):
    """The LMM annotator failed (transport, timeout or unparseable reply)."""


class ParseError(AnnotationError):
    """An LMM reply did not follow the ``A<k>: Yes|No`` grammar."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConfigError(PrefDistillError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
