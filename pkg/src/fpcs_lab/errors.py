"""Exception hierarchy shared by all modules."""


class FpcsError(Exception):
    """Base class for library errors."""


class NumericalError(FpcsError):
    """A computation could not be completed reliably."""


class NonFinite(NumericalError, ValueError):
    pass


class NoConvergence(NumericalError):
    pass


class DriftInconsistency(NumericalError):
    """The drift over the persisting pieces disagrees with the actual drift."""


class ZenoGuard(NumericalError):
    """Segment budget exhausted before reaching the horizon."""


class DimensionMismatch(FpcsError, ValueError):
    pass


class HorizonMismatch(FpcsError, ValueError):
    pass


class EmptyPolyhedron(FpcsError, ValueError):
    pass


class EmptyIntersection(EmptyPolyhedron):
    pass


class NotCritical(FpcsError, ValueError):
    pass


class NotLowDimensional(FpcsError, ValueError):
    pass


class BadParams(FpcsError, ValueError):
    pass


class DuplicateVectors(FpcsError, ValueError):
    pass


class ScaleLimit(FpcsError):
    """Subset enumeration would exceed the configured budget."""
