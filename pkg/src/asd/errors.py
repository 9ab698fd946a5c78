"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible or unsupported shapes."""


class ConfigError(ValueError):
    """A configuration value violates a structural requirement."""


class FormatError(ValueError):
    """A binary file does not conform to the ASDT layout."""


class ConfigFileError(ValueError):
    """A config file line cannot be parsed or names an unknown key."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss or invalid inputs)."""
