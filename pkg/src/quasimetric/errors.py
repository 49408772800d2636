"""Exception hierarchy shared by every module."""

from __future__ import annotations


class QuasiMetricError(Exception):
    """Base class for all library errors."""


class InvalidRecipe(QuasiMetricError, ValueError):
    pass


class SeparationViolation(QuasiMetricError, ValueError):
    def __init__(self, i: int, j: int):
        super().__init__(f"points {i} and {j} are distinct but at mutual distance 0")
        self.pair = (i, j)


class TriangleViolation(QuasiMetricError, ValueError):
    def __init__(self, triple: tuple[int, int, int], excess: float):
        i, j, k = triple
        super().__init__(
            f"d({i},{k}) exceeds d({i},{j}) + d({j},{k}) by {excess:.3g}"
        )
        self.triple = triple
        self.excess = excess


class NegativeWeight(QuasiMetricError, ValueError):
    pass


class FieldSpaceMismatch(QuasiMetricError, ValueError):
    pass


class EstimateUndefined(QuasiMetricError, ArithmeticError):
    """A distinct point sits at forward distance 0 but the numerator is positive."""

    def __init__(self, x0: int, x: int):
        super().__init__(
            f"d({x0},{x}) = 0 with a positive numerator; the limsup ratio is undefined"
        )
        self.x0 = x0
        self.x = x


class SetsNotSeparated(QuasiMetricError, ValueError):
    pass


class EmptySet(QuasiMetricError, ValueError):
    pass


class DegenerateSpace(QuasiMetricError, ValueError):
    pass


class CurveSpaceMismatch(QuasiMetricError, ValueError):
    pass


class StepExceedsRadius(QuasiMetricError, ValueError):
    def __init__(self, step: int, length: float, radius: float):
        super().__init__(
            f"curve step {step} has length {length:.6g}, not inside the radius {radius:.6g}"
        )
        self.step = step
        self.length = length
        self.radius = radius


class PreconditionNotMet(QuasiMetricError, ValueError):
    pass


class NonpositiveK(QuasiMetricError, ValueError):
    pass


class DimensionMismatch(QuasiMetricError, ValueError):
    pass


class NotPointInduced(QuasiMetricError, ValueError):
    def __init__(self, x: int, candidates: list[int]):
        if candidates:
            msg = f"row {x} has {len(candidates)} unit entries {candidates}"
        else:
            msg = f"row {x} has no unit entry"
        super().__init__(msg + "; the operator is not a composition operator")
        self.x = x
        self.candidates = candidates


class IsoCheckFailed(QuasiMetricError, ValueError):
    """recover_tau was called on an operator that is not an order-preserving isomorphism."""

    def __init__(self, report):
        failed = [k for k in ("multiplicative", "unital", "positive", "bijective")
                  if not getattr(report, k)]
        super().__init__(f"operator fails isomorphism checks: {', '.join(failed)}")
        self.report = report


class AsymmetricInput(QuasiMetricError, ValueError):
    pass
