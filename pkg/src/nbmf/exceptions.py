"""Exception types raised by the package.

All of them subclass :class:`ValueError` so callers used to scikit-learn
style validation can keep catching that.
"""


class ValidationError(ValueError):
    """Invalid argument value (range, domain, empty input)."""


class ShapeError(ValidationError):
    """Array shapes do not agree."""


class CapacityError(ValueError):
    """A solver was asked for a problem larger than it can handle."""


class IdxParseError(ValueError):
    """Malformed IDX payload.

    ``offset`` is the byte position where parsing stopped.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ModelFormatError(ValueError):
    """A serialized model file is missing, truncated or corrupt."""
