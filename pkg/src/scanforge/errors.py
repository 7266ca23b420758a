"""Exception hierarchy shared by the library and the command line tool.

Every error carries an ``exit_code`` so the CLI can map failures onto a
stable contract: 2 config, 3 file/data, 4 pipeline, 5 metric.
"""

from __future__ import annotations


class ScanForgeError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(ScanForgeError):
    """A config file or CLI argument could not be interpreted."""

    exit_code = 2

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line

    def __reduce__(self):
        return (_rebuild, (type(self), str(self)))


class DataError(ScanForgeError):
    """An input file exists but its contents are malformed."""

    exit_code = 3


class MalformedScan(DataError):
    pass


class LabelLengthMismatch(DataError):
    pass


class MalformedBoxLine(DataError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line

    def __reduce__(self):
        return (_rebuild, (type(self), str(self)))


class PipelineError(ScanForgeError):
    """An edit step could not be carried out on the given data."""

    exit_code = 4


class OriginPoint(PipelineError):
    """A point at the sensor origin has no spherical direction."""


class EmptyObject(PipelineError):
    """A removal box contains no scan points."""


class NoGroundPoints(PipelineError):
    """Ground height was requested but no ground-labeled points exist."""


class NoDonorSector(PipelineError):
    """No object-free azimuth sector is available to copy from."""


class InsufficientGroundContext(PipelineError):
    """Too few ground points near the mask to fit a plane."""


class ObjectOutOfGrid(PipelineError):
    """A posed object has no points inside the voxel grid range."""


class EmptyCategory(PipelineError):
    """An object library holds no objects of the requested category."""


class TooFewPoints(PipelineError):
    """An extracted object falls below the minimum point count."""


class NoObjectFreeSector(PipelineError):
    """No synthetic mask placement avoids real object points."""


class EditStepError(PipelineError):
    """Wraps a failure inside a multi-step edit with the step named."""

    def __init__(self, step: str, cause: ScanForgeError):
        super().__init__(f"{step}: {cause}")
        self.step = step
        self.cause = cause
        self.exit_code = cause.exit_code

    def __reduce__(self):
        return (type(self), (self.step, self.cause))


def _rebuild(cls, message):
    """Re-create a formatted exception without re-running its formatter.

    Keeps exceptions with custom constructors picklable across process
    pools: the message round-trips, the structured attrs do not.
    """
    err = cls.__new__(cls)
    Exception.__init__(err, message)
    err.line = None
    return err


class MetricError(ScanForgeError):
    exit_code = 5


class UnnormalizedInput(MetricError):
    """A divergence was asked of histograms that do not sum to one."""


class EmptySet(MetricError):
    """A set-level metric needs at least one sample per side."""


class EmptyCloud(MetricError):
    """A cloud-level metric needs at least one point per side."""
