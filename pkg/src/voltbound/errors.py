"""Exception hierarchy shared across the package."""


class VoltboundError(Exception):
    """Base class for all package errors."""


class ModelError(VoltboundError):
    """Invalid network data: bad indices, duplicate lines, disconnected graph, …"""


class AssemblyError(VoltboundError):
    """Quadratic-form construction failed (dimension or index out of range)."""


class CatalogError(VoltboundError):
    """A link matrix failed its annihilation or consistency check."""


class EmbeddingError(VoltboundError):
    """Input to the real embedding is not Hermitian within tolerance."""


class SolverError(VoltboundError):
    """The SDP backend failed: unbounded objective or numerical trouble."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class QueryError(VoltboundError):
    """Feasibility query with inconsistent dimensions."""


class NoCertificate(VoltboundError):
    """The bounds LMI is infeasible at the requested margin."""


class VerificationError(VoltboundError):
    """A solved result failed re-verification (certificate or containment)."""


class SamplerError(VoltboundError):
    """Ellipsoid sampling is impossible (shape matrix not positive definite)."""


class PfError(VoltboundError):
    """Power-flow iteration failed (singular Jacobian or no convergence)."""


class EnvelopeError(VoltboundError):
    """No Monte-Carlo sample survived the filters."""
