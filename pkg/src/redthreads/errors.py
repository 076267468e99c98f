"""Exception hierarchy shared by every module."""


class RedThreadsError(Exception):
    """Base class for all runtime errors raised by this package."""


class SpecError(RedThreadsError, ValueError):
    """A sphere specification is malformed.

    ``kind`` is one of ``"OverlappingScopes"``, ``"EmptyCompareList"``,
    ``"NegativeTolerance"``, ``"NestedSphere"`` or ``"MissingBinding"``.
    """

    def __init__(self, kind, detail=""):
        self.kind = kind
        super().__init__(f"{kind}: {detail}" if detail else kind)


class ShapeError(RedThreadsError):
    """Replica payloads disagree in shape or type (a runtime bug, not a fault)."""


class AlreadyInitialized(RedThreadsError):
    pass


class ResourceError(RedThreadsError):
    pass


class PendingSpheres(RedThreadsError):
    pass


class NotInSphere(RedThreadsError):
    pass


class LockError(RedThreadsError):
    pass


class DestroyWhileHeld(LockError):
    pass


class UnsetNotOwner(LockError):
    pass


class TimestampRegression(RedThreadsError, ValueError):
    pass


class BufferFull(RedThreadsError):
    pass


class InvalidIsland(RedThreadsError, ValueError):
    pass


class UnsupportedPlatformWarning(RuntimeWarning):
    """Affinity or priority control is unavailable; execution proceeds unpinned."""


class UnknownVariable(RedThreadsError, KeyError):
    pass


class BitOutOfRange(RedThreadsError, ValueError):
    pass


class EmptySweep(RedThreadsError, ValueError):
    pass


class DimensionMismatch(RedThreadsError, ValueError):
    pass


class Breakdown(RedThreadsError, ArithmeticError):
    """CG breakdown: p^T A p <= 0, so the operator is not SPD."""


class GridTooCoarse(RedThreadsError, ValueError):
    pass
