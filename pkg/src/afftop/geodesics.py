"""Closed-form geodesic families and boundedness of their generators.

Force-free motion admits exponential solutions phi(t) = exp(Et) phi0 (or
phi0 exp(Ft)) exactly when the generator commutes with its metric
transpose; this module builds such curves, measures how far a candidate is
from solving the balance laws, and classifies traceless generators by the
growth of exp(alpha t).
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import _mat
from ._mat import metric_transpose
from .dynamics import FullPhaseState, full_rhs
from .errors import InvalidParameters
from .kinematics import Configuration, VelocityState, _metrics_or_identity
from .models import DAlembert

__all__ = [
    "GeneratorCurve",
    "BoundednessVerdict",
    "SweepReport",
    "metric_transpose",
    "is_metric_normal",
    "random_metric_normal_generator",
    "relative_equilibrium_residual",
    "classify_generator",
    "perturbation_sweep",
]

CURVE_SIDES = ("left", "right")

# eigenvector-matrix conditioning beyond this counts as defective
DIAGONALIZABLE_COND = 1e8


@dataclass(frozen=True)
class GeneratorCurve:
    """One-parameter configuration curve exp(gen t) phi0 or phi0 exp(gen t).

    ``side`` "left" places the exponential on the spatial side, "right" on
    the material side.  The two descriptions are interchangeable: a left
    curve with generator E equals the right curve with phi0^-1 E phi0.
    """

    phi0: np.ndarray
    gen: np.ndarray
    side: str = "right"

    def __post_init__(self):
        phi0 = _mat.as_matrix(self.phi0, name="phi0")
        gen = _mat.as_matrix(self.gen, phi0.shape[0], "generator")
        if self.side not in CURVE_SIDES:
            raise InvalidParameters(f"side must be 'left' or 'right', got {self.side!r}")
        if np.linalg.det(phi0) <= 0.0:
            raise InvalidParameters("phi0 must be invertible with positive orientation")
        object.__setattr__(self, "phi0", phi0)
        object.__setattr__(self, "gen", gen)

    @property
    def n(self):
        return self.phi0.shape[0]

    def _phi(self, t):
        step = expm(float(t) * self.gen)
        return step @ self.phi0 if self.side == "left" else self.phi0 @ step

    def at(self, t):
        return Configuration(phi=self._phi(t))

    def velocity(self, t):
        phi = self._phi(t)
        return self.gen @ phi if self.side == "left" else phi @ self.gen

    def state(self, model, t, metrics=None):
        """Translation-free phase-space point on the curve at time t."""
        vel = VelocityState(phi_dot=self.velocity(t))
        return FullPhaseState.from_velocities(model, self.at(t), vel, metrics,
                                              time=float(t))

    def left_generator(self):
        if self.side == "left":
            return self.gen.copy()
        return self.phi0 @ self.gen @ np.linalg.inv(self.phi0)

    def right_generator(self):
        if self.side == "right":
            return self.gen.copy()
        return np.linalg.solve(self.phi0, self.gen @ self.phi0)

    def to_left(self):
        return GeneratorCurve(phi0=self.phi0, gen=self.left_generator(), side="left")

    def to_right(self):
        return GeneratorCurve(phi0=self.phi0, gen=self.right_generator(), side="right")


def is_metric_normal(gen, metric=None, tol=1e-9):
    """Whether ``gen`` commutes with its metric transpose.

    Returns (normal, commutator_norm); normal means the spectral norm of
    [gen, gen^mT] stays within tol times the squared norm of the generator.
    """
    gen = _mat.as_matrix(gen, name="generator")
    metric = _mat.eye(gen.shape[0]) if metric is None else _mat.check_spd(metric)
    adjoint = metric_transpose(gen, metric)
    comm = gen @ adjoint - adjoint @ gen
    comm_norm = float(np.linalg.norm(comm, 2))
    scale = float(np.linalg.norm(gen, 2)) ** 2
    return comm_norm <= tol * scale if scale > 0.0 else True, comm_norm


def _random_orthogonal(n, rng):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def random_metric_normal_generator(metric, rng, scale=1.0):
    """Random generator that is normal with respect to ``metric``.

    Built as an orthogonal conjugation of 2x2 spiral blocks (rotation plus
    uniform growth), pushed into the metric's orthonormal gauge; such a
    matrix commutes with its metric transpose by construction.
    """
    metric = _mat.check_spd(metric)
    n = metric.shape[0]
    blocks = np.zeros((n, n))
    i = 0
    while i + 1 < n:
        a, b = scale * rng.standard_normal(2)
        blocks[i:i + 2, i:i + 2] = [[a, -b], [b, a]]
        i += 2
    if i < n:
        blocks[i, i] = scale * rng.standard_normal()
    orth = _random_orthogonal(n, rng)
    half, half_inv = _mat.spd_sqrt(metric)
    return half_inv @ (orth @ blocks @ orth.T) @ half


def relative_equilibrium_residual(model, curve, metrics=None, t_samples=None):
    """Worst balance-law violation of the exponential curve over t_samples.

    The curve's chart momentum has a closed-form rate (the co-moving
    placement of scalar models is constant, the spatial one evolves by the
    commutator with the right generator); the residual is the norm gap
    between that rate and the model's equations of motion, maximized over
    the samples.  Translation-free geodetic motion is assumed.
    """
    metrics = _metrics_or_identity(metrics, curve.n)
    ts = np.linspace(0.0, 5.0, 11) if t_samples is None else np.asarray(t_samples,
                                                                        dtype=float)
    e_gen = curve.left_generator()
    f_gen = curve.right_generator()
    worst = 0.0
    for t in ts:
        state = curve.state(model, t, metrics)
        phi = state.config.phi
        rate = full_rhs(model, None, state, metrics)
        if isinstance(model, DAlembert):
            d_curve = phi @ (f_gen @ model.inertia @ f_gen.T
                             + model.inertia @ f_gen.T @ f_gen.T) @ phi.T @ metrics.g
        elif rate.chart == "spatial":
            sig_hat = state.mom.Sigma_hat
            d_curve = phi @ (f_gen @ sig_hat - sig_hat @ f_gen) @ state.config.phi_inv()
        else:
            sigma = state.mom.Sigma
            d_curve = state.config.phi_inv() @ (sigma @ e_gen - e_gen @ sigma) @ phi
        worst = max(worst,
                    _mat.frob(d_curve - rate.dmom),
                    _mat.frob(curve.velocity(t) - rate.dphi))
    return float(worst)


# ---------------------------------------------------------------------------
# boundedness of traceless generators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundednessVerdict:
    """Growth class of exp(alpha t) with the evidence that produced it.

    Bounded means the spectrum is purely imaginary and the generator is
    diagonalizable (similar to a skew-symmetric matrix over the reals);
    Unbounded means some eigenvalue has a real part; Marginal tags the
    defective purely-imaginary case, which grows polynomially and is
    deliberately never reported as Bounded.
    """

    classification: str
    spectrum: np.ndarray
    diag_condition: float

    @property
    def is_bounded(self):
        return self.classification == "Bounded"


def classify_generator(alpha, tol=1e-9):
    """Classify a traceless generator by the growth of its exponential."""
    alpha = _mat.as_matrix(alpha, name="generator")
    norm = float(np.linalg.norm(alpha, 2))
    if norm == 0.0:
        return BoundednessVerdict("Bounded", np.zeros(alpha.shape[0], complex), 1.0)
    spectrum, vecs = np.linalg.eig(alpha)
    cond = float(np.linalg.cond(vecs))
    if float(np.max(np.abs(spectrum.real))) > tol * norm:
        label = "Unbounded"
    elif cond < DIAGONALIZABLE_COND:
        label = "Bounded"
    else:
        label = "Marginal"
    return BoundednessVerdict(classification=label, spectrum=spectrum,
                              diag_condition=cond)


@dataclass(frozen=True)
class SweepReport:
    """Classification stability of a generator under sampled perturbations."""

    base: BoundednessVerdict
    counts: dict
    fraction_preserved: float
    radius: float
    samples: int


def _draw_perturbation(family, n, rng):
    if callable(family):
        delta = _mat.as_matrix(family(rng), n, "perturbation")
    elif family == "symmetric":
        m = rng.standard_normal((n, n))
        delta = _mat.deviator(_mat.sym(m))
    elif family == "skew":
        delta = _mat.skew(rng.standard_normal((n, n)))
    elif family == "general":
        delta = _mat.deviator(rng.standard_normal((n, n)))
    else:
        raise InvalidParameters(f"unknown perturbation family {family!r}")
    norm = float(np.linalg.norm(delta, 2))
    if norm == 0.0:
        raise InvalidParameters("perturbation draw degenerated to zero")
    return delta / norm


def perturbation_sweep(alpha_base, perturbation_family, radius, samples,
                       seed=0, tol=1e-9):
    """Classify alpha_base + radius * delta over sampled unit perturbations.

    ``perturbation_family`` is "symmetric", "skew", "general", or a callable
    rng -> matrix; draws are normalized to unit spectral norm, so ``radius``
    is the absolute perturbation size.  Returns the fraction of samples
    keeping the base classification.
    """
    alpha = _mat.as_matrix(alpha_base, name="generator")
    if samples < 1:
        raise InvalidParameters("need at least one sample")
    rng = np.random.default_rng(seed)
    base = classify_generator(alpha, tol)
    counts = {"Bounded": 0, "Unbounded": 0, "Marginal": 0}
    for _ in range(samples):
        delta = _draw_perturbation(perturbation_family, alpha.shape[0], rng)
        verdict = classify_generator(alpha + radius * delta, tol)
        counts[verdict.classification] += 1
    fraction = counts[base.classification] / samples
    return SweepReport(base=base, counts=counts, fraction_preserved=fraction,
                       radius=float(radius), samples=int(samples))
