"""Exception hierarchy.

Configuration problems derive from ``ConfigError``; everything raised by a
numerical stage derives from ``NumericalFailure`` so the CLI can map it to
exit status 3.
"""
from __future__ import annotations


class EulerCertError(Exception):
    pass


class ConfigError(EulerCertError, ValueError):
    pass


class InvalidDomain(ConfigError):
    """Boundary curves intersect, degenerate, or have nonpositive radius."""


class MeshMismatch(EulerCertError, ValueError):
    """Two fields or operators live on different meshes."""


class NumericalFailure(EulerCertError):
    pass


class MeshFailure(NumericalFailure):
    pass


class SolverFailure(NumericalFailure):
    pass


class EigenFailure(NumericalFailure):
    pass


class PowerIterationStagnant(NumericalFailure):
    pass


class TraceFailure(NumericalFailure):
    """A characteristic could not be integrated (step size underflow or bad start)."""


class TransversalityLost(NumericalFailure):
    pass


class DegenerateExit(NumericalFailure):
    pass


class SingularJacobian(NumericalFailure):
    pass


class NeighborhoodExit(NumericalFailure):
    pass


class NonTransversal(NumericalFailure):
    pass


class NoMargin(NumericalFailure):
    pass


class NoNeighborhood(NumericalFailure):
    pass


class LedgerIncomplete(EulerCertError):
    """A downstream check needs a constant that was never computed."""
