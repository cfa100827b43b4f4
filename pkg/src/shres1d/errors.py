"""Exception hierarchy shared by all modules."""


class Shres1dError(Exception):
    """Base class for all package errors."""


class NonRepresentableInterface(Shres1dError):
    """Interface or well position does not sit on a grid node."""


class NoWell(Shres1dError):
    """Operation requires at least one well in the potential."""


class DegenerateDenominator(Shres1dError):
    """Scattering denominator too close to zero."""


class SingularRobinSystem(Shres1dError):
    """Discrete Robin boundary value problem is numerically singular."""


class NearDirichletEigenvalue(Shres1dError):
    """Interior Dirichlet solve hit a (near-)eigenvalue of the operator."""


class BranchCutHit(Shres1dError):
    """Argument of the square root lies on the branch cut."""


class NewtonDiverged(Shres1dError):
    """Newton iteration failed to converge; carries the iterate trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class CountMismatch(Shres1dError):
    """Argument-principle zero count disagrees with the located roots."""


class NearResonance(Shres1dError):
    """Resolvent requested too close to a resonance."""


class EmptyWindow(Shres1dError):
    """No eigenvalue found in the requested spectral window."""


class FactorizationFailure(Shres1dError):
    """Banded factorization of the time-stepping system failed."""


class UnsupportedPotentialAtBoundary(Shres1dError):
    """Transparent boundary conditions require zero potential near truncation."""


class ShapeMismatch(Shres1dError):
    """Trajectories do not share grid, time step or step count."""


class AccretivityProbeFailed(Shres1dError):
    """Random quadratic-form probe of the deformed operator came out negative."""

    def __init__(self, message, worst=None):
        super().__init__(message)
        self.worst = worst


class ClusterNotIsolated(Shres1dError):
    """Eigenvalue cluster is not isolated inside the requested contour."""


class BiorthogonalityBreakdown(Shres1dError):
    """Left/right eigenvector pairing is numerically degenerate."""


class StepTooCoarse(Shres1dError):
    """Projector path is sampled too coarsely for parallel transport."""


class ConfigError(Shres1dError):
    """Base class for configuration errors (CLI exit code 2)."""


class UnknownKey(ConfigError):
    """Configuration contains a key no module understands."""


class TypeMismatch(ConfigError):
    """Configuration value has the wrong type."""


class ConstraintViolation(ConfigError):
    """Configuration value violates a module precondition."""
