"""Exception types and the exit-code contract shared with the CLI."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_NUMERIC = 4


class ThermalDesignsError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ThermalDesignsError):
    """Invalid configuration, argument, or input file (CLI exit code 2)."""


class InvalidDimensionError(ConfigError):
    """Matrix or Hilbert-space dimension out of range."""


class InvalidLocalityError(ConfigError):
    """Locality k incompatible with the particle count n."""


class InvalidTermError(ConfigError):
    """Local term does not fit the requested embedding."""


class InvalidTemperatureError(ConfigError):
    """Inverse temperature must be finite and nonnegative."""


class UnsupportedEnsembleError(ConfigError):
    """Operation defined for the global ensemble only."""


class CsvFormatError(ConfigError):
    """Malformed curve CSV; message carries the offending line number."""


class CapacityError(ThermalDesignsError):
    """A requested (D, t) exceeds the configured memory cap (CLI exit code 3)."""


class NumericFailureError(ThermalDesignsError):
    """Eigensolver non-convergence or overflow (CLI exit code 4).

    Carries seed / sample-index provenance when the failing matrix came out
    of an ensemble, so the exact draw can be reproduced.
    """

    def __init__(self, message, seed=None, sample_index=None):
        if seed is not None or sample_index is not None:
            message = f"{message} [seed={seed}, sample={sample_index}]"
        super().__init__(message)
        self.seed = seed
        self.sample_index = sample_index
