"""Exception hierarchy shared by every module of the toolkit."""


class LatentLayersError(Exception):
    """Base class for all toolkit errors."""


# graph
class GraphError(LatentLayersError):
    pass


class CycleDetected(GraphError):
    pass


class DuplicateName(GraphError):
    pass


class ObservedWithoutCardinality(GraphError):
    pass


class UnknownNode(GraphError):
    pass


class NotAnIntermediateLatent(GraphError):
    pass


class NotASetting(GraphError):
    pass


class InvalidPartition(GraphError):
    pass


class FanoutDetected(GraphError):
    pass


class InconsistentWiring(GraphError):
    pass


class UnknownScenario(GraphError):
    pass


# dist
class ShapeMismatch(LatentLayersError):
    pass


class UnknownId(LatentLayersError):
    pass


class InvalidState(LatentLayersError):
    pass


class SupportViolation(LatentLayersError):
    pass


class NormalizationError(LatentLayersError):
    pass


# lp
class FloatTargetRejected(LatentLayersError):
    pass


class CertificateInvalid(LatentLayersError):
    pass


# npa / sdp
class UnsupportedScenario(LatentLayersError):
    pass


class WordTooLong(LatentLayersError):
    pass


class CoordinateNotExpressible(LatentLayersError):
    pass


class SolverDidNotConverge(LatentLayersError):
    """Raised when the SDP iteration budget runs out.

    The best iterate is attached as ``solution`` so callers can still
    inspect residuals.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class EigenFailure(LatentLayersError):
    pass


# entropy
class EliminationBlowup(LatentLayersError):
    pass


class CoordinateUnavailable(LatentLayersError):
    pass
