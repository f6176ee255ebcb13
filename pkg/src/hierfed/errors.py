"""Error taxonomy shared across the package.

ConfigError covers bad user input (flags, config files, malformed data
files); NumericsError covers non-finite losses or parameters detected during
training. The CLI maps these to distinct exit codes.
"""


class ConfigError(Exception):
    """Invalid configuration or unusable input data."""


class DataError(ConfigError):
    """Malformed data file; message carries the offending line number."""


class NumericsError(Exception):
    """Non-finite value encountered during training or evaluation."""
