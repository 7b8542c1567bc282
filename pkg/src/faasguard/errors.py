"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
anything else -> 3.
"""


class FaasGuardError(Exception):
    """Base class for all package errors."""


class ConfigError(FaasGuardError):
    """Bad configuration or command usage."""


class DataError(FaasGuardError):
    """Malformed or inconsistent input data."""


class ModelFormatError(DataError):
    """Model file is not in the expected container format."""


class ModelVersionError(ModelFormatError):
    """Model file declares an unsupported format version."""


class ModelTruncatedError(ModelFormatError):
    """Model file ends before the declared payload/digest."""


class ModelDigestError(ModelFormatError):
    """Model file payload does not match its recorded digest."""
