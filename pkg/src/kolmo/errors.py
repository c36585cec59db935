"""Exception hierarchy shared by every kolmo module."""


class KolmoError(ValueError):
    """Base class for all library errors."""


class DimensionMismatch(KolmoError):
    pass


class NotSymmetric(KolmoError):
    pass


class NotPositiveSemidefinite(KolmoError):
    pass


class A0NotPositive(KolmoError):
    pass


class NotBlockForm(KolmoError):
    """Raised when A or B violates the zero pattern of the canonical block basis."""


class BlockRankDeficient(KolmoError):
    def __init__(self, j, rank, expected):
        self.j = j
        self.rank = rank
        self.expected = expected
        super().__init__(f"block B_{j} has rank {rank}, expected {expected}")


class InvalidStrata(KolmoError):
    pass


class MissingStrata(KolmoError):
    pass


class NonPositiveRadius(KolmoError):
    pass


class NonPositiveTime(KolmoError):
    pass


class NonFinite(KolmoError):
    pass


class GramianSingular(KolmoError):
    pass


class ZeroNormal(KolmoError):
    pass


class ZeroPoint(KolmoError):
    pass


class DegenerateSample(KolmoError):
    pass


class PoleEvaluation(KolmoError):
    pass


class PoleInsideDomain(KolmoError):
    pass


class BadTimeOrder(KolmoError):
    pass


class BadSampleCount(KolmoError):
    pass


class BadStep(KolmoError):
    pass


class NotControllable(KolmoError):
    pass


class EmptyControl(KolmoError):
    pass


class PointOutsideDomain(KolmoError):
    pass


class PointOnBoundary(KolmoError):
    pass


class CurveExitsDomain(KolmoError):
    pass


class EnergyWindowUnsatisfiable(KolmoError):
    pass


class TargetNotAttainable(KolmoError):
    pass


class ChainInvalid(KolmoError):
    pass
