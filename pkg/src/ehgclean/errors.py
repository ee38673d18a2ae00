"""Exception and warning types shared across the package."""


class ValidationError(ValueError):
    """Invalid parameters or malformed input data (CLI exit code 2)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to converge or degenerated (CLI exit code 3)."""


class PipelineWarning(UserWarning):
    """Non-fatal condition worth flagging to the user."""


class DensePulseWarning(PipelineWarning):
    """Pulses are too dense for the percentile threshold to sit above artifact level."""
