"""Exception types shared across the package."""


class UavClassError(Exception):
    """Base class for all package-specific failures."""


class GimbalSingularityError(UavClassError):
    """Pitch angle too close to +/- pi/2 for the Euler-rate transform."""


class IntegrationDivergedError(UavClassError):
    """A derivative evaluation produced non-finite values during integration.

    ``stage`` is the RK4 stage index (1..4) at which the divergence was seen,
    or None when detected outside a stage evaluation.
    """

    def __init__(self, message: str, stage: int | None = None):
        super().__init__(message)
        self.stage = stage


class ScenarioInfeasibleError(UavClassError):
    """Too many consecutive seeds produced rejected trajectories."""


class DivergedTrainingError(UavClassError):
    """Training loss became non-finite. Carries the offending epoch."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class DataFormatError(UavClassError):
    """Base class for on-disk dataset/trajectory format problems."""


class VersionMismatchError(DataFormatError):
    """Stored format version differs from what this code writes."""


class TruncatedFileError(DataFormatError):
    """A binary payload is shorter (or longer) than its manifest says."""


class HashMismatchError(DataFormatError):
    """A binary payload does not match its recorded checksum."""


class CheckpointError(UavClassError):
    """Base class for model checkpoint problems."""


class ShapeMismatchError(CheckpointError):
    """Checkpoint tensor shapes disagree with the expected architecture."""


class MalformedCheckpointError(CheckpointError):
    """Checkpoint is missing required fields or is otherwise unreadable."""


class ParameterFileError(UavClassError):
    """A vehicle parameter file has unknown, missing, or invalid entries."""
