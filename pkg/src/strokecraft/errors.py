"""Error taxonomy shared by the library and the command line harness.

Each class carries the process exit code the harness maps it to, so failures
keep their category when they cross the CLI boundary.
"""


class StrokecraftError(Exception):
    """Base class for all failures raised by this package."""

    exit_code = 1


class ConfigError(StrokecraftError):
    """Invalid configuration or violated call contract (bad shapes, ranges, modes)."""

    exit_code = 2


class DataIOError(StrokecraftError):
    """Unreadable, truncated, or malformed files."""

    exit_code = 3


class NumericalError(StrokecraftError):
    """Non-finite values or diverging optimization."""

    exit_code = 4


class VerificationError(StrokecraftError):
    """A mathematical identity check failed."""

    exit_code = 5
