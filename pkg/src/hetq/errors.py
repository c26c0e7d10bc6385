"""Exception hierarchy shared by every hetq module."""


class HetqError(Exception):
    """Base class for all toolkit errors."""


class NonPositiveRate(HetqError, ValueError):
    pass


class LoadOutOfRange(HetqError, ValueError):
    pass


class InvalidPolicy(HetqError, ValueError):
    pass


class EmptyCatalog(HetqError, ValueError):
    pass


class Unstable(HetqError, ValueError):
    """Some per-state tolerant load is >= 1, so no stationary regime exists."""


class PreconditionViolation(HetqError, ValueError):
    pass


class Infeasible(HetqError, ValueError):
    """The occupancy budget is below what any stationary Markov policy achieves."""


class SearchCapExceeded(HetqError, RuntimeError):
    pass


class InvalidConfig(HetqError, ValueError):
    pass


class HorizonTooShort(HetqError, ValueError):
    pass


class InsufficientVisits(HetqError, ValueError):
    pass


class InsufficientSamples(HetqError, ValueError):
    pass


class RatioMonotonicityWarning(RuntimeWarning):
    """The threshold-search ratio decreased between consecutive indices."""


class ClampWarning(RuntimeWarning):
    """A closed-form blocking level fell outside [d_min, d_max] and was clamped."""
