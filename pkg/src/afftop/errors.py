"""Exception taxonomy shared by every module of the package."""


class AfftopError(Exception):
    """Base class for all package errors."""


class SingularConfiguration(AfftopError):
    """Internal configuration matrix is singular or numerically near-singular."""


class NonPositiveMetric(AfftopError):
    """A supplied metric matrix is not symmetric positive-definite."""


class NegativeOrientation(AfftopError):
    """Configuration has non-positive orientation (det phi <= 0)."""


class DegenerateSpectrum(AfftopError):
    """Deformation spectrum is degenerate and no continuity hint disambiguates it."""


class InvalidParameters(AfftopError):
    """Inertia or model parameters violate the model's validity conditions."""


class SingularInertia(AfftopError):
    """Inertia combination makes the inverse Legendre map undefined."""


class CoincidentInvariants(AfftopError):
    """Coupled deformation invariants coincide; reduced kernel is singular."""


class StepFailure(AfftopError):
    """Adaptive integrator could not reach the requested accuracy."""


class SingularityApproach(AfftopError):
    """Trajectory approached the singular set det phi -> 0."""


class SchemaError(AfftopError):
    """Scenario file violates the scenario schema."""


class SemanticError(AfftopError):
    """Scenario is well-formed but semantically inconsistent."""
