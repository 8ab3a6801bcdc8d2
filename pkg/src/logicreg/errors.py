"""Exception types shared across the package."""


class LogicRegError(Exception):
    """Base class for all package errors."""


class DataError(LogicRegError):
    """Malformed or unusable input data (CSV shape, missing columns, empty sets)."""


class ConfigError(LogicRegError):
    """Invalid configuration value (ranges, unknown keys, bad grids)."""


class ModelFormatError(LogicRegError):
    """Model or circuit file failed validation (version, checksum, structure)."""


class DivergenceError(LogicRegError):
    """Training produced a non-finite loss."""
