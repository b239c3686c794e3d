"""Shared exception types."""


class EstimationError(RuntimeError):
    """An estimation stage could not produce a usable result.

    Raised e.g. when a spectral search finds fewer peaks than requested
    sources, or when estimated angles collide and the gain system becomes
    numerically singular. Batch drivers catch this and flag the trial
    instead of aborting.
    """
