"""Exception types raised by the numerical engines."""


class TransconvError(Exception):
    """Base class for all errors raised by this package."""


class SingularFrame(TransconvError):
    """Concatenated normal frames are (numerically) not invertible."""


class RankDeficient(TransconvError):
    """A matrix expected to have full row rank does not."""


class InvalidSignature(TransconvError, ValueError):
    """Dimensions violate n1 + n2 + n3 = 2n or 0 < n_i < n."""


class DegenerateFacet(TransconvError):
    """A facet simplex has (numerically) zero volume."""


class NonTransversal(TransconvError):
    """A transversality constant fell below the determinant floor."""


class EmptyInteraction(TransconvError):
    """No facet combination satisfies the interaction constraints."""


class ParallelPair(TransconvError):
    """A facet pair with nearly parallel normal spaces meets a query point."""

    def __init__(self, message, pairs=()):
        super().__init__(message)
        self.pairs = list(pairs)


class NotConverged(TransconvError):
    """Two consecutive quadrature levels disagree beyond tolerance."""

    def __init__(self, message, coarse=None, fine=None):
        super().__init__(message)
        self.coarse = coarse
        self.fine = fine


class NonSpanning(TransconvError):
    """Null spaces of the three maps fail to span the ambient space."""


class Stagnated(TransconvError):
    """Alternating maximization stopped without meeting its tolerance."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate
