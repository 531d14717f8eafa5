"""Exception hierarchy shared by all tubecalc modules."""


class TubecalcError(Exception):
    """Base class for every error raised by the library."""


class InvalidInput(TubecalcError, ValueError):
    pass


class GridTooLarge(TubecalcError):
    pass


class NonConvergedProjection(TubecalcError):
    """Newton footpoint projection did not converge (point likely near the medial axis)."""


class MedialAxisProximity(TubecalcError):
    """Two competing footpoints were found for a query point."""


class DegenerateNormal(TubecalcError):
    pass


class DegenerateExtrusion(TubecalcError):
    """A factor 1 + t*kappa_i is non-positive: the tube reaches a focal point."""


class TubeOverlapsMedialAxis(TubecalcError):
    pass


class SpacingTooCoarse(TubecalcError):
    pass


class AmbiguousNormalEigenvalue(TubecalcError):
    pass


class NoConvergence(TubecalcError):
    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class SingularWithoutRegularization(TubecalcError):
    pass


class InsufficientInteriorStencil(TubecalcError):
    pass


class ProjectionNotInjective(TubecalcError):
    pass


class LemmaViolation(TubecalcError, AssertionError):
    """A numerical check of a convergence or semicontinuity statement failed."""

    def __init__(self, lemma, message):
        super().__init__(f"{lemma}: {message}")
        self.lemma = lemma
