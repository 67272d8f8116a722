"""Kinetic-energy models on the affine group and their Legendre transforms.

Four families: the classical quadrupole model (``DAlembert``), the fully
invariant model with no metric term (``AffineAffine``), and the two
mixed-invariance models that add a metric-transpose term on the material
side (``AffineMetrical``) or the spatial side (``MetricalAffine``).  Scalar
models carry three weights: ``metrical`` multiplies the metric-transpose
coupling, ``affine`` the plain square, ``trace`` the squared trace.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _mat
from .errors import InvalidParameters, SingularInertia
from .kinematics import (
    MetricPair,
    VelocityState,
    _metrics_or_identity,
    affine_velocities,
    deformation_tensors,
    spin_vorticity,
)

__all__ = [
    "Momenta",
    "DAlembert",
    "AffineAffine",
    "AffineMetrical",
    "MetricalAffine",
    "comoving_momentum",
    "total_affine_momentum",
    "casimir_invariants",
    "inverse_coefficients",
]


# ---------------------------------------------------------------------------
# momenta
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Momenta:
    """Translational covector plus both placements of the affine momentum.

    ``Sigma`` acts on spatial axes, ``Sigma_hat`` on material axes; they are
    phi-conjugate and share all trace invariants.
    """

    p: np.ndarray
    Sigma: np.ndarray
    Sigma_hat: np.ndarray

    def __post_init__(self):
        s = _mat.as_matrix(self.Sigma, name="Sigma")
        n = s.shape[0]
        sh = _mat.as_matrix(self.Sigma_hat, n, "Sigma_hat")
        p = _mat.as_vector(self.p, n, "p")
        object.__setattr__(self, "Sigma", s)
        object.__setattr__(self, "Sigma_hat", sh)
        object.__setattr__(self, "p", p)

    @property
    def n(self):
        return self.Sigma.shape[0]

    @classmethod
    def from_spatial(cls, config, p, Sigma):
        Sigma = _mat.as_matrix(Sigma, config.n, "Sigma")
        phi_inv = config.phi_inv()
        return cls(p=p, Sigma=Sigma, Sigma_hat=phi_inv @ Sigma @ config.phi)

    @classmethod
    def from_comoving(cls, config, p, Sigma_hat):
        Sigma_hat = _mat.as_matrix(Sigma_hat, config.n, "Sigma_hat")
        return cls(p=p, Sigma=config.phi @ Sigma_hat @ config.phi_inv(),
                   Sigma_hat=Sigma_hat)


def comoving_momentum(config, p):
    """Material-frame translational momentum phi^T p."""
    return config.phi.T @ np.asarray(p, dtype=float)


def total_affine_momentum(x, p, Sigma):
    """Affine moment of momentum about the origin, x (x) p + Sigma."""
    return _mat.outer(np.asarray(x, dtype=float), np.asarray(p, dtype=float)) + Sigma


def casimir_invariants(Sigma, kmax):
    """Trace powers Tr(Sigma^k) for k = 1..kmax; placement-independent."""
    Sigma = _mat.as_matrix(Sigma, name="Sigma")
    out = np.empty(kmax)
    acc = np.eye(Sigma.shape[0])
    for k in range(kmax):
        acc = acc @ Sigma
        out[k] = np.trace(acc)
    return out


# ---------------------------------------------------------------------------
# scalar-model coefficient algebra
# ---------------------------------------------------------------------------

def inverse_coefficients(metrical, affine, trace, dim):
    """Coefficients of the inverse Legendre map for the scalar models.

    The forward map sends a velocity form W to
    metrical * W^T_metric + affine * W + trace * Tr(W) Id; the inverse has
    the same shape with the returned coefficients.  Raises SingularInertia
    when the quadratic form is degenerate.
    """
    den = metrical * metrical - affine * affine
    if den == 0.0:
        raise SingularInertia(
            f"metrical = +-affine ({metrical:g}, {affine:g}) degenerates the form")
    block = (metrical + affine) * (metrical + affine + dim * trace)
    if metrical + affine + dim * trace == 0.0:
        raise SingularInertia(
            f"metrical + affine + dim*trace = 0 degenerates the trace block")
    c_metric = metrical / den
    c_affine = -affine / den
    c_trace = -trace / block
    return c_metric, c_affine, c_trace


def _quadratic_form_spectrum(metrical, affine, trace, dim):
    # eigenvalues on the symmetric-traceless / antisymmetric / trace blocks
    return {
        "symmetric_traceless": metrical + affine,
        "antisymmetric": metrical - affine,
        "trace": metrical + affine + dim * trace,
    }


def _apply_form(coeff_metric, coeff_plain, coeff_trace, w, metric):
    out = coeff_plain * w + coeff_trace * np.trace(w) * np.eye(w.shape[0])
    if coeff_metric != 0.0:
        out = out + coeff_metric * _mat.metric_transpose(w, metric)
    return out


# ---------------------------------------------------------------------------
# classical quadrupole model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DAlembert:
    """Material quadrupole kinetic energy Tr(phi_dot J phi_dot^T g)/2."""

    mass: float
    inertia: np.ndarray  # material quadrupole J, SPD

    chart = "spatial"

    def __post_init__(self):
        if not self.mass > 0.0:
            raise InvalidParameters(f"mass must be positive, got {self.mass!r}")
        j = _mat.as_matrix(self.inertia, name="inertia")
        try:
            j = _mat.check_spd(j, "inertia")
        except Exception as exc:
            raise InvalidParameters(str(exc)) from None
        object.__setattr__(self, "inertia", j)

    @property
    def dim(self):
        return self.inertia.shape[0]

    def spatial_quadrupole(self, config):
        """J[phi] = phi J phi^T."""
        return config.phi @ self.inertia @ config.phi.T

    def affine_moment(self, config, vel):
        """Kinematical moment K = phi J phi_dot^T; Sigma = K g."""
        return config.phi @ self.inertia @ vel.phi_dot.T

    def comoving_affine_moment(self, config, vel):
        """K_hat = J Omega_hat^T; Sigma_hat = K_hat G."""
        omega_hat = config.phi_inv() @ vel.phi_dot
        return self.inertia @ omega_hat.T

    def kinetic_energy(self, config, vel, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        t_int = 0.5 * np.trace(vel.phi_dot @ self.inertia @ vel.phi_dot.T @ metrics.g)
        t_tr = 0.5 * self.mass * vel.v @ metrics.g @ vel.v
        return float(t_int + t_tr)

    def legendre(self, config, vel, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        sigma = self.affine_moment(config, vel) @ metrics.g
        p = self.mass * metrics.g @ vel.v
        return Momenta.from_spatial(config, p, sigma)

    def inverse_legendre(self, config, momenta, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        jt = _mat.inv(self.spatial_quadrupole(config), "spatial quadrupole")
        omega = np.linalg.solve(metrics.g, momenta.Sigma.T) @ jt
        v = np.linalg.solve(metrics.g, momenta.p) / self.mass
        return VelocityState(phi_dot=omega @ config.phi, v=v)

    def kinetic_hamiltonian(self, config, momenta, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        jt = _mat.inv(self.spatial_quadrupole(config), "spatial quadrupole")
        t_int = 0.5 * np.trace(
            momenta.Sigma @ np.linalg.solve(metrics.g, momenta.Sigma.T) @ jt)
        t_tr = 0.5 * momenta.p @ np.linalg.solve(metrics.g, momenta.p) / self.mass
        return float(t_int + t_tr)


# ---------------------------------------------------------------------------
# scalar models
# ---------------------------------------------------------------------------

class _ScalarModel:
    """Shared machinery for the three affinely invariant families."""

    def _coeffs(self):
        return inverse_coefficients(self.metrical, self.affine, self.trace, self.dim)

    def energy_spectrum(self):
        """Eigenvalues of the internal quadratic form by irreducible block."""
        return _quadratic_form_spectrum(self.metrical, self.affine, self.trace, self.dim)

    def _internal_energy(self, w, metric):
        t = (0.5 * self.affine * np.trace(w @ w)
             + 0.5 * self.trace * np.trace(w) ** 2)
        if self.metrical != 0.0:
            t += 0.5 * self.metrical * np.trace(_mat.metric_transpose(w, metric) @ w)
        return float(t)

    def _internal_hamiltonian(self, s, metric):
        c_metric, c_affine, c_trace = self._coeffs()
        t = (0.5 * c_affine * np.trace(s @ s)
             + 0.5 * c_trace * np.trace(s) ** 2)
        if c_metric != 0.0:
            t += 0.5 * c_metric * np.trace(_mat.metric_transpose(s, metric) @ s)
        return float(t)

    def _split_terms(self, s, skew_norm_sq):
        # shear / dilatation / rotation pieces of the internal Hamiltonian
        n = self.dim
        alpha = self.metrical + self.affine
        beta = self.metrical + self.affine + n * self.trace
        c2 = np.trace(s @ s)
        c1 = np.trace(s)
        shear = (c2 - c1 * c1 / n) / (2.0 * alpha)
        dil = c1 * c1 / (2.0 * n * beta)
        if self.metrical == 0.0:
            rot = 0.0
        else:
            rot = self.metrical * skew_norm_sq / (
                2.0 * (self.metrical ** 2 - self.affine ** 2))
        return {"shear": float(shear), "dilatation": float(dil),
                "rotation": float(rot)}


def _validate_scalar(model):
    inverse_coefficients(model.metrical, model.affine, model.trace, model.dim)
    if model.mass is not None and not model.mass > 0.0:
        raise InvalidParameters(f"mass must be positive, got {model.mass!r}")


@dataclass(frozen=True)
class AffineAffine(_ScalarModel):
    """Doubly invariant internal energy, no metric-transpose term.

    ``translation`` picks the translational coupling: "metrical" uses the
    spatial metric, "cauchy" the Cauchy deformation tensor (keeping the
    whole energy affinely invariant), "frozen" pins the center of mass.
    """

    dim: int
    affine: float
    trace: float = 0.0
    mass: float = None
    translation: str = "frozen"

    metrical = 0.0

    def __post_init__(self):
        if self.translation not in ("metrical", "cauchy", "frozen"):
            raise InvalidParameters(f"unknown translation mode {self.translation!r}")
        if self.translation != "frozen" and self.mass is None:
            raise InvalidParameters("translation coupling needs a mass")
        _validate_scalar(self)

    @property
    def chart(self):
        return "spatial" if self.translation == "cauchy" else "comoving"

    def _translational_energy(self, config, vel, metrics):
        if self.translation == "frozen":
            return 0.0
        if self.translation == "metrical":
            return 0.5 * self.mass * vel.v @ metrics.g @ vel.v
        c = deformation_tensors(config, metrics).C
        return 0.5 * self.mass * vel.v @ c @ vel.v

    def _linear_momentum(self, config, vel, metrics):
        if self.translation == "frozen":
            return np.zeros(self.dim)
        if self.translation == "metrical":
            return self.mass * metrics.g @ vel.v
        return self.mass * deformation_tensors(config, metrics).C @ vel.v

    def _linear_velocity(self, config, p, metrics):
        if self.translation == "frozen":
            return np.zeros(self.dim)
        if self.translation == "metrical":
            return np.linalg.solve(metrics.g, p) / self.mass
        c_inv = deformation_tensors(config, metrics).C_inv
        return c_inv @ p / self.mass

    def _translational_hamiltonian(self, config, p, metrics):
        if self.translation == "frozen":
            return 0.0
        return float(0.5 * p @ self._linear_velocity(config, p, metrics))

    def kinetic_energy(self, config, vel, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        forms = affine_velocities(config, vel)
        return (self._internal_energy(forms.Omega_hat, metrics.eta)
                + self._translational_energy(config, vel, metrics))

    def legendre(self, config, vel, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        forms = affine_velocities(config, vel)
        sigma_hat = _apply_form(0.0, self.affine, self.trace,
                                forms.Omega_hat, metrics.eta)
        p = self._linear_momentum(config, vel, metrics)
        return Momenta.from_comoving(config, p, sigma_hat)

    def inverse_legendre(self, config, momenta, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        _, c_affine, c_trace = self._coeffs()
        omega_hat = _apply_form(0.0, c_affine, c_trace,
                                momenta.Sigma_hat, metrics.eta)
        v = self._linear_velocity(config, momenta.p, metrics)
        return VelocityState(phi_dot=config.phi @ omega_hat, v=v)

    def kinetic_hamiltonian(self, config, momenta, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        return (self._internal_hamiltonian(momenta.Sigma_hat, metrics.eta)
                + self._translational_hamiltonian(config, momenta.p, metrics))

    def kinetic_hamiltonian_split(self, config, momenta, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        terms = self._split_terms(momenta.Sigma_hat, 0.0)
        terms["translation"] = self._translational_hamiltonian(
            config, momenta.p, metrics)
        return terms


@dataclass(frozen=True)
class AffineMetrical(_ScalarModel):
    """Spatially affine, materially metrical model.

    The metric-transpose term uses the material metric, so the internal
    energy is invariant under all spatial affine maps but only material
    isometries.  Translation couples through the Cauchy tensor to keep the
    spatial affine invariance.
    """

    dim: int
    metrical: float
    affine: float
    trace: float = 0.0
    mass: float = 1.0

    chart = "spatial"

    def __post_init__(self):
        _validate_scalar(self)

    def kinetic_energy(self, config, vel, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        forms = affine_velocities(config, vel)
        t_int = self._internal_energy(forms.Omega_hat, metrics.eta)
        c = deformation_tensors(config, metrics).C
        return t_int + 0.5 * self.mass * vel.v @ c @ vel.v

    def legendre(self, config, vel, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        forms = affine_velocities(config, vel)
        sigma_hat = _apply_form(self.metrical, self.affine, self.trace,
                                forms.Omega_hat, metrics.eta)
        p = self.mass * deformation_tensors(config, metrics).C @ vel.v
        return Momenta.from_comoving(config, p, sigma_hat)

    def omega_hat_from_sigma_hat(self, sigma_hat, metrics):
        c_metric, c_affine, c_trace = self._coeffs()
        return _apply_form(c_metric, c_affine, c_trace, sigma_hat, metrics.eta)

    def linear_velocity(self, config, p, metrics):
        """v = C_inv p / m, the contravariant Cauchy inverse acting on p."""
        c_inv = deformation_tensors(config, metrics).C_inv
        return c_inv @ p / self.mass

    def inverse_legendre(self, config, momenta, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        omega_hat = self.omega_hat_from_sigma_hat(momenta.Sigma_hat, metrics)
        v = self.linear_velocity(config, momenta.p, metrics)
        return VelocityState(phi_dot=config.phi @ omega_hat, v=v)

    def kinetic_hamiltonian(self, config, momenta, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        t_int = self._internal_hamiltonian(momenta.Sigma_hat, metrics.eta)
        t_tr = 0.5 * momenta.p @ self.linear_velocity(config, momenta.p, metrics)
        return float(t_int + t_tr)

    def kinetic_hamiltonian_casimir_form(self, config, momenta, metrics=None):
        """Same Hamiltonian through trace invariants plus the vorticity norm."""
        metrics = _metrics_or_identity(metrics, self.dim)
        n = self.dim
        alpha = self.metrical + self.affine
        c2 = np.trace(momenta.Sigma_hat @ momenta.Sigma_hat)
        c1 = np.trace(momenta.Sigma_hat)
        sv = spin_vorticity(momenta.Sigma, momenta.Sigma_hat, metrics)
        t_int = (0.5 * c2 / alpha
                 - 0.5 * self.trace * c1 * c1
                 / (alpha * (alpha + n * self.trace))
                 + 0.5 * self.metrical * sv.vorticity_norm ** 2
                 / (self.metrical ** 2 - self.affine ** 2))
        t_tr = 0.5 * momenta.p @ self.linear_velocity(config, momenta.p, metrics)
        return float(t_int + t_tr)

    def kinetic_hamiltonian_split(self, config, momenta, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        sv = spin_vorticity(momenta.Sigma, momenta.Sigma_hat, metrics)
        terms = self._split_terms(momenta.Sigma_hat, sv.vorticity_norm ** 2)
        terms["translation"] = float(
            0.5 * momenta.p @ self.linear_velocity(config, momenta.p, metrics))
        return terms


@dataclass(frozen=True)
class MetricalAffine(_ScalarModel):
    """Spatially metrical, materially affine model; mirror of the above.

    The metric-transpose term uses the spatial metric; translation couples
    through the spatial metric as usual.  Internal energy is invariant under
    all material affine maps but only spatial isometries.
    """

    dim: int
    metrical: float
    affine: float
    trace: float = 0.0
    mass: float = 1.0

    chart = "comoving"

    def __post_init__(self):
        _validate_scalar(self)

    def kinetic_energy(self, config, vel, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        forms = affine_velocities(config, vel)
        t_int = self._internal_energy(forms.Omega, metrics.g)
        return t_int + 0.5 * self.mass * vel.v @ metrics.g @ vel.v

    def legendre(self, config, vel, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        forms = affine_velocities(config, vel)
        sigma = _apply_form(self.metrical, self.affine, self.trace,
                            forms.Omega, metrics.g)
        p = self.mass * metrics.g @ vel.v
        return Momenta.from_spatial(config, p, sigma)

    def omega_from_sigma(self, sigma, metrics):
        c_metric, c_affine, c_trace = self._coeffs()
        return _apply_form(c_metric, c_affine, c_trace, sigma, metrics.g)

    def inverse_legendre(self, config, momenta, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        omega = self.omega_from_sigma(momenta.Sigma, metrics)
        v = np.linalg.solve(metrics.g, momenta.p) / self.mass
        return VelocityState(phi_dot=omega @ config.phi, v=v)

    def kinetic_hamiltonian(self, config, momenta, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        t_int = self._internal_hamiltonian(momenta.Sigma, metrics.g)
        t_tr = 0.5 * momenta.p @ np.linalg.solve(metrics.g, momenta.p) / self.mass
        return float(t_int + t_tr)

    def kinetic_hamiltonian_casimir_form(self, config, momenta, metrics=None):
        """Same Hamiltonian through trace invariants plus the spin norm."""
        metrics = _metrics_or_identity(metrics, self.dim)
        n = self.dim
        alpha = self.metrical + self.affine
        c2 = np.trace(momenta.Sigma @ momenta.Sigma)
        c1 = np.trace(momenta.Sigma)
        sv = spin_vorticity(momenta.Sigma, momenta.Sigma_hat, metrics)
        t_int = (0.5 * c2 / alpha
                 - 0.5 * self.trace * c1 * c1
                 / (alpha * (alpha + n * self.trace))
                 + 0.5 * self.metrical * sv.spin_norm ** 2
                 / (self.metrical ** 2 - self.affine ** 2))
        t_tr = 0.5 * momenta.p @ np.linalg.solve(metrics.g, momenta.p) / self.mass
        return float(t_int + t_tr)

    def kinetic_hamiltonian_split(self, config, momenta, metrics=None):
        metrics = _metrics_or_identity(metrics, self.dim)
        sv = spin_vorticity(momenta.Sigma, momenta.Sigma_hat, metrics)
        terms = self._split_terms(momenta.Sigma, sv.spin_norm ** 2)
        terms["translation"] = float(
            0.5 * momenta.p @ np.linalg.solve(metrics.g, momenta.p) / self.mass)
        return terms
