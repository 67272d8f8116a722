"""Affinely-rigid body dynamics with affinely-invariant kinetic energies."""

from .errors import (
    AfftopError,
    CoincidentInvariants,
    DegenerateSpectrum,
    InvalidParameters,
    NegativeOrientation,
    NonPositiveMetric,
    SchemaError,
    SemanticError,
    SingularConfiguration,
    SingularInertia,
    SingularityApproach,
    StepFailure,
)
from .kinematics import (
    Configuration,
    MetricPair,
    TwoPolarFactors,
    VelocityState,
    affine_velocities,
    deformation_invariants,
    deformation_tensors,
    polar_decompose,
    spin_vorticity,
    two_polar_decompose,
    volume_ratio,
)
from .models import (
    AffineAffine,
    AffineMetrical,
    DAlembert,
    MetricalAffine,
    Momenta,
    casimir_invariants,
    comoving_momentum,
    inverse_coefficients,
    total_affine_momentum,
)
from .dynamics import (
    FullPhaseState,
    IntegratorSettings,
    InvariantReport,
    KinematicalMoments,
    PotentialSpec,
    StateRate,
    Trajectory,
    dilatational_potential,
    full_rhs,
    hamiltonian,
    integrate,
    kinematical_moments,
    monitor_invariants,
    potential_and_forces,
    potential_value,
)
from .geodesics import (
    BoundednessVerdict,
    GeneratorCurve,
    SweepReport,
    classify_generator,
    is_metric_normal,
    metric_transpose,
    perturbation_sweep,
    random_metric_normal_generator,
    relative_equilibrium_residual,
)

from .lattice import (
    DilatationSplit,
    ReducedPhaseState,
    ReducedRate,
    ReducedTrajectory,
    SplitReport,
    UnitaryCompact,
    integrate_reduced,
    reconstruct_state,
    reduce_state,
    reduce_trajectory,
    reduced_casimirs,
    reduced_hamiltonian,
    reduced_rhs,
    split_dilatation,
    splitting_report,
    sutherland_oracle_rhs,
)
from .cli import (
    Scenario,
    bundled_scenario_path,
    parse_scenario,
    run_cli,
)

__version__ = "0.1.0"
