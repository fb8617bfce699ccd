"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with an operation."""


class FormatError(ValueError):
    """A binary file does not follow the expected layout."""


class BadMagicError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class ConfigError(ValueError):
    """Invalid run configuration (unknown key, bad value, missing input)."""


class NonFiniteLossError(FloatingPointError):
    """Training produced a NaN/inf loss; carries the step and loss breakdown."""

    def __init__(self, iteration, breakdown):
        self.iteration = iteration
        self.breakdown = breakdown
        super().__init__(f"non-finite loss at iteration {iteration}: {breakdown}")
