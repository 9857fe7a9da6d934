class HetEVTError(Exception):
    """Base class for errors raised by hetevt."""


class DataError(HetEVTError, ValueError):
    """Input data violates a structural requirement."""

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = list(rows or [])


class DegenerateSpacingsError(HetEVTError, ValueError):
    """Second log-moment does not exceed the squared first one."""


class NoFiniteEndpointError(HetEVTError, ValueError):
    """The extreme value index estimate is non-negative."""


class SweepError(HetEVTError, RuntimeError):
    """Every k of a sweep was excluded."""


class HetEVTWarning(UserWarning):
    pass
