"""Exception hierarchy shared by all modules."""


class PeakonError(Exception):
    """Base class for every error raised by :mod:`novipeak`."""


class DegenerateConfiguration(PeakonError, ValueError):
    pass


class InvalidGrid(PeakonError, ValueError):
    pass


class CollisionDetected(PeakonError):
    """Two particle positions came closer than the configured gap."""

    def __init__(self, t, i, j, gap):
        self.t, self.i, self.j, self.gap = float(t), int(i), int(j), float(gap)
        super().__init__(f"collision between peaks {i} and {j} at t={t:.6g} (gap {gap:.3g})")


class StepSizeUnderflow(PeakonError):
    def __init__(self, t, h):
        self.t, self.h = float(t), float(h)
        super().__init__(f"step size underflow at t={t:.6g} (h={h:.3g})")


class NonPositiveAmplitude(PeakonError, ValueError):
    pass


class UnorderedPositions(PeakonError, ValueError):
    pass


class ComplexSpectrum(PeakonError):
    pass


class NonPositiveEigenvalue(PeakonError):
    pass


class PreconditionUnmet(PeakonError, ValueError):
    pass


class SeparationTooSmall(PeakonError, ValueError):
    pass


class BumpLost(PeakonError):
    pass


class NewtonDiverged(PeakonError):
    pass


class JacobianSingular(PeakonError):
    pass


class BlowUp(PeakonError):
    def __init__(self, t, max_slope):
        self.t, self.max_slope = float(t), float(max_slope)
        super().__init__(f"slope blow-up at t={t:.6g}: max|u_x| = {max_slope:.3g}")


class BoundaryContamination(PeakonError):
    pass


class ParseError(PeakonError, ValueError):
    def __init__(self, line, message):
        self.line, self.message = line, message
        super().__init__(f"line {line}: {message}")


class ValidationError(PeakonError, ValueError):
    def __init__(self, field, message=None):
        self.field = field
        self.message = message or f"invalid value for {field!r}"
        super().__init__(self.message)
