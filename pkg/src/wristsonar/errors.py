"""Exception hierarchy for the wristsonar pipeline."""


class PipelineError(Exception):
    """Base class for all domain errors raised by this package."""


class NoSignalError(PipelineError):
    """Start detection found nothing to lock onto (e.g. all-zero audio)."""


class InsufficientDataError(PipelineError):
    """An input is too short for the requested transform."""


class DegeneratePoseError(PipelineError):
    """Hand landmarks do not span a usable palm plane."""


class BandDesignError(PipelineError):
    """A filter band collapsed after Nyquist clamping."""


class IngestionError(PipelineError):
    """A session file is missing, malformed, or inconsistent."""


class PairingError(PipelineError):
    """Audio and pose clocks cannot be reconciled."""


class SplitError(PipelineError):
    """A dataset cannot satisfy the requested split protocol."""
