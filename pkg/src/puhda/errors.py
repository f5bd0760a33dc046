"""Exception types shared across the package."""


class PuhdaError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PuhdaError):
    """An operation received values outside its domain."""


class ConfigurationError(PuhdaError):
    """Components were wired together inconsistently."""


class SchemaError(PuhdaError):
    """Tabular input does not match the declared feature schema."""


class DataError(PuhdaError):
    """A data file contains content that cannot be parsed."""


class UndefinedMetricError(PuhdaError):
    """A metric is undefined for the given inputs."""
