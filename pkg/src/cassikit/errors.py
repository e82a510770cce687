"""Exception hierarchy shared across the toolkit.

Exit codes follow the CLI contract: 2 parameter errors, 3 data/format
errors, 4 worker errors.
"""


class CassiError(Exception):
    exit_code = 1


class ParameterError(CassiError):
    """Invalid argument value or out-of-range configuration."""
    exit_code = 2


class ShapeError(ParameterError):
    """Array dimensions inconsistent with the operator/basis geometry."""


class SizeError(ParameterError):
    """Instance exceeds a testing-only size cap."""


class FormatError(CassiError):
    """Malformed file header or payload layout."""
    exit_code = 3


class DataError(CassiError):
    """Non-finite or otherwise unusable numeric payload."""
    exit_code = 3


class WorkerError(CassiError):
    """External denoiser worker failed, timed out, or broke protocol."""
    exit_code = 4
