"""Exception types shared across the package."""


class PrecondLassoError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(PrecondLassoError):
    """A matrix required to be SPD failed its pivot test."""


class SingularBlock(PrecondLassoError):
    """A principal block that must be inverted is numerically singular."""


class NoConvergence(PrecondLassoError):
    """An iterative method hit its iteration cap before reaching tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class EdgeUncovered(PrecondLassoError):
    """A graph edge is contained in no bag of a tree decomposition."""

    def __init__(self, edge):
        super().__init__(f"edge {edge} is in no bag")
        self.edge = edge


class DisconnectedVertexSubtree(PrecondLassoError):
    """The bags containing some vertex do not form a connected subtree."""

    def __init__(self, vertex):
        super().__init__(f"bags containing vertex {vertex} are not a connected subtree")
        self.vertex = vertex


class BlockNotPD(PrecondLassoError):
    """A diagonal block in the block-Cholesky recursion is not positive definite
    (typically: too few samples for the empirical covariance)."""

    def __init__(self, node, message=""):
        super().__init__(message or f"block at decomposition node {node} is not PD")
        self.node = node


class TooLarge(PrecondLassoError):
    """An exhaustive enumeration would exceed its guard."""


class Infeasible(PrecondLassoError):
    """A constrained program has no feasible point."""


class NumericalFailure(PrecondLassoError):
    """An optimizer terminated abnormally."""


class GenerationFailed(PrecondLassoError):
    """A randomized construction failed its certificate checks after retries."""


class LayoutOverflow(PrecondLassoError):
    """A circuit layout does not fit in the requested grid side length."""


class InvalidMinorModel(PrecondLassoError):
    """A minor model violates disjointness/connectivity/edge-mapping rules."""


class RankDeficient(PrecondLassoError):
    """A matrix that must have full row rank does not."""


class MalformedCSV(PrecondLassoError):
    """A CSV file does not have the layout this package emits."""
