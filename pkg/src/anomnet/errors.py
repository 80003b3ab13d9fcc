"""Exception types shared across the toolkit."""


class AnomnetError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(AnomnetError, ValueError):
    """Inputs violate an operation's preconditions."""


class UndefinedCorrelationError(InvalidInputError):
    """A correlation is requested for a series that is constant."""


class ParseError(AnomnetError, ValueError):
    """A file does not match its declared format.

    ``offset`` is a byte offset for binary files and a 1-based line number
    for text files; ``unit`` says which.
    """

    def __init__(self, message, offset=None, unit="line"):
        if offset is not None:
            message = f"{message} (at {unit} {offset})"
        super().__init__(message)
        self.offset = offset
        self.unit = unit
