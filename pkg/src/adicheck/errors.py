"""Exception hierarchy shared by every adicheck module."""


class AdicheckError(Exception):
    """Base class for all errors raised by adicheck."""


# matrix core
class NotHermitian(AdicheckError):
    pass


class ConvergenceFailure(AdicheckError):
    pass


class DimensionMismatch(AdicheckError):
    pass


# hamiltonian models
class OutOfDomain(AdicheckError):
    pass


class TabulatedGapTooLarge(AdicheckError):
    pass


class NonHermitianSample(AdicheckError):
    pass


class NonMonotonicTimes(AdicheckError):
    pass


class TooFewSamples(AdicheckError):
    pass


# spectral flow
class DegenerateSpectrum(AdicheckError):
    def __init__(self, t, gap):
        self.t = float(t)
        self.gap = float(gap)
        super().__init__(f"degenerate spectrum at t={self.t:.6g} (gap {self.gap:.3e})")


class ContinuityLoss(AdicheckError):
    pass


class SameLevel(AdicheckError):
    pass


class PhaseUndefined(AdicheckError):
    pass


# conditions
class SegmentationUnstable(AdicheckError):
    pass


# propagator
class StepUnderflow(AdicheckError):
    pass


class GridMismatch(AdicheckError):
    pass


# scenario / cli
class ParseError(AdicheckError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class ValidationError(AdicheckError):
    def __init__(self, field, message=""):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)
