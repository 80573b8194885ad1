"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with an operation."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ContractError(ValueError):
    """A documented precondition of a call was violated."""


class FormatError(ValueError):
    """A file or buffer does not follow the expected on-disk format."""


class ParseError(FormatError):
    """A sequence or config file could not be parsed.

    ``path`` and ``line`` locate the offending input when known.
    """

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class NumericalError(RuntimeError):
    """Training or checking produced non-finite or out-of-tolerance numbers."""
