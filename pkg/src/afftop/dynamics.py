"""Balance laws, potentials, and the adaptive integrator.

Each model is integrated in whichever momentum placement makes its balance
law autonomous: the spatial affine momentum for the quadrupole and the
spatially-affine families, the co-moving one for the materially-affine
family.  Conservation is monitored, never enforced.
"""

from dataclasses import dataclass

import numpy as np

from . import _mat
from .errors import (
    InvalidParameters,
    NegativeOrientation,
    SingularConfiguration,
    SingularityApproach,
    StepFailure,
)
from .kinematics import (
    Configuration,
    MetricPair,
    _metrics_or_identity,
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
    _apply_form,
    casimir_invariants,
    total_affine_momentum,
)

__all__ = [
    "PotentialSpec",
    "FullPhaseState",
    "StateRate",
    "KinematicalMoments",
    "IntegratorSettings",
    "Trajectory",
    "InvariantReport",
    "dilatational_potential",
    "potential_value",
    "potential_and_forces",
    "full_rhs",
    "kinematical_moments",
    "hamiltonian",
    "integrate",
    "monitor_invariants",
    "dalembert_acceleration",
    "total_momentum_rate",
    "translational_velocity_rate",
]

POTENTIAL_KINDS = ("none", "dilatation_only", "doubly_isotropic", "general_config")
DILATATION_KINDS = ("cosh_well", "quadratic", "tanh_threshold")


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

def dilatational_potential(kind, kappa, q_mean):
    """Value and derivative of an isotropic volume well at mean stretch q.

    "cosh_well" is kappa/8 (D^2 + 1/D^2 - 2) in the linear scale D = e^q: a
    harmonic well kappa q^2/2 near q = 0 that stiffens exponentially on both
    infinite expansion and collapse.  "quadratic" is the plain harmonic
    well.  "tanh_threshold" saturates to a finite plateau from below,
    modelling a binding threshold.
    """
    if not kappa > 0.0:
        raise InvalidParameters(f"stiffness must be positive, got {kappa!r}")
    q = float(q_mean)
    if kind == "cosh_well":
        s, c = np.sinh(q), np.cosh(q)
        return 0.5 * kappa * s * s, kappa * s * c
    if kind == "quadratic":
        return 0.5 * kappa * q * q, kappa * q
    if kind == "tanh_threshold":
        t = np.tanh(q)
        return 0.5 * kappa * (t * t - 1.0), kappa * t * (1.0 - t * t)
    raise InvalidParameters(f"unknown dilatational potential {kind!r}")


@dataclass(frozen=True)
class PotentialSpec:
    """Declarative potential acting on the internal configuration.

    ``dilatation_only`` depends on the volume alone; ``doubly_isotropic``
    adds a permutation-invariant pair term over the stretch logarithms;
    ``general_config`` wraps a raw scalar ``config_fn(phi, x)``
    differentiated by central differences with step ``fd_step``.

    ``shear_pair`` maps a separation d = |q^a - q^b| >= 0 to a
    (value, derivative) pair; it should be smooth at d = 0 so the forces
    stay well defined on near-degenerate stretch spectra.
    """

    kind: str = "none"
    dil_kind: str = "cosh_well"
    kappa: float = 1.0
    shear_pair: object = None
    config_fn: object = None
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise InvalidParameters(f"unknown potential kind {self.kind!r}")
        if self.dil_kind not in DILATATION_KINDS:
            raise InvalidParameters(f"unknown dilatational kind {self.dil_kind!r}")
        if self.kind in ("dilatation_only", "doubly_isotropic") and not self.kappa > 0.0:
            raise InvalidParameters("stiffness kappa must be positive")
        if self.kind == "general_config" and not callable(self.config_fn):
            raise InvalidParameters("general_config potential needs a config_fn")
        if self.shear_pair is not None and not callable(self.shear_pair):
            raise InvalidParameters("shear_pair must be callable")

    @property
    def is_zero(self):
        return self.kind == "none"


def _stretch_potential(pot, q):
    # V(q) = V_dil(mean q) + pair sum; symmetric under permutations of q
    n = q.shape[0]
    value, d_mean = dilatational_potential(pot.dil_kind, pot.kappa, q.mean())
    grad = np.full(n, d_mean / n)
    if pot.shear_pair is not None:
        for a in range(n):
            for b in range(a + 1, n):
                sep = q[a] - q[b]
                v, dv = pot.shear_pair(abs(sep))
                value += v
                s = np.sign(sep)
                grad[a] += dv * s
                grad[b] -= dv * s
    return float(value), grad


def potential_value(pot, config, metrics=None):
    """Potential energy alone; cheaper than assembling the forces."""
    if pot is None or pot.kind == "none":
        return 0.0
    metrics = _metrics_or_identity(metrics, config.n)
    if pot.kind == "general_config":
        return float(pot.config_fn(config.phi, config.x))
    if pot.kind == "dilatation_only":
        value, _ = dilatational_potential(
            pot.dil_kind, pot.kappa, volume_ratio(config, metrics).q_mean)
        return float(value)
    value, _ = _stretch_potential(pot, two_polar_decompose(config, metrics).q)
    return value


def _config_fn_gradients(pot, config):
    fn = pot.config_fn
    phi, x = config.phi, config.x
    n = config.n
    value = float(fn(phi, x))
    h = pot.fd_step * max(1.0, float(np.abs(phi).max()), float(np.abs(x).max()))
    dvdx = np.zeros(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        dvdx[i] = (fn(phi, x + e) - fn(phi, x - e)) / (2.0 * h)
    dvdphi = np.zeros_like(phi)
    for j in range(n):
        for a in range(n):
            de = np.zeros_like(phi)
            de[j, a] = h
            dvdphi[j, a] = (fn(phi + de, x) - fn(phi - de, x)) / (2.0 * h)
    return value, dvdx, dvdphi


def potential_and_forces(pot, config, metrics=None):
    """Potential energy with its force system (V, Q_i, Q^i_j, Q_hat).

    Q_i is the translational force -dV/dx, Q the mixed-index internal force
    -phi^i_A dV/dphi^j_A, and Q_hat its phi-conjugate acting on material
    axes.  Potentials that see the configuration only through the stretch
    spectrum get their force assembled from the left frame,
    Q = -sum_a (dV/dq^a) L_a (g L_a)^T, which keeps the force system exactly
    isometry-equivariant.
    """
    n = config.n
    metrics = _metrics_or_identity(metrics, n)
    if pot is None or pot.kind == "none":
        zero = np.zeros((n, n))
        return 0.0, np.zeros(n), zero, zero.copy()
    if pot.kind == "general_config":
        value, dvdx, dvdphi = _config_fn_gradients(pot, config)
        q_mat = -config.phi @ dvdphi.T
        return value, -dvdx, q_mat, config.phi_inv() @ q_mat @ config.phi
    if pot.kind == "dilatation_only":
        # the mean-stretch gradient spreads evenly: a pure isotropic pressure
        value, d_mean = dilatational_potential(
            pot.dil_kind, pot.kappa, volume_ratio(config, metrics).q_mean)
        q_mat = (-d_mean / n) * np.eye(n)
        return float(value), np.zeros(n), q_mat, q_mat.copy()
    factors = two_polar_decompose(config, metrics)
    value, grad = _stretch_potential(pot, factors.q)
    q_mat = -(factors.L * grad) @ factors.L.T @ metrics.g
    return value, np.zeros(n), q_mat, config.phi_inv() @ q_mat @ config.phi


# ---------------------------------------------------------------------------
# phase-space points and balance laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FullPhaseState:
    """Point of the full phase space: configuration plus momenta at a time."""

    config: Configuration
    mom: Momenta
    time: float = 0.0

    def __post_init__(self):
        if self.mom.n != self.config.n:
            raise InvalidParameters("momentum dimension does not match configuration")

    @property
    def n(self):
        return self.config.n

    @classmethod
    def from_velocities(cls, model, config, vel, metrics=None, time=0.0):
        return cls(config=config, mom=model.legendre(config, vel, metrics),
                   time=time)


@dataclass(frozen=True)
class StateRate:
    """Phase-space velocity in the model's autonomous chart."""

    dx: np.ndarray
    dp: np.ndarray
    dphi: np.ndarray
    dmom: np.ndarray
    chart: str


def hamiltonian(model, pot, state, metrics=None):
    """Total energy of a phase-space point."""
    metrics = _metrics_or_identity(metrics, state.n)
    return float(model.kinetic_hamiltonian(state.config, state.mom, metrics)
                 + potential_value(pot, state.config, metrics))


def _forces(model, pot, config, p, mom, metrics, extra_forces):
    n = config.n
    if (pot is None or pot.kind == "none") and extra_forces is None:
        return None
    if pot is None or pot.kind == "none":
        q_i, q_mat = np.zeros(n), np.zeros((n, n))
    else:
        _, q_i, q_mat, _ = potential_and_forces(pot, config, metrics)
    if extra_forces is not None:
        momenta = (Momenta.from_spatial(config, p, mom)
                   if model.chart == "spatial"
                   else Momenta.from_comoving(config, p, mom))
        extra_i, extra_mat = extra_forces(config, momenta, metrics)
        q_i = q_i + extra_i
        q_mat = q_mat + extra_mat
    return q_i, q_mat


def _rhs_core(model, pot, config, p, mom, metrics, extra_forces):
    n = config.n
    phi = config.phi
    forces = _forces(model, pot, config, p, mom, metrics, extra_forces)

    if isinstance(model, DAlembert):
        jq = phi @ model.inertia @ phi.T
        omega = np.linalg.solve(metrics.g, mom.T) @ _mat.inv(jq, "spatial quadrupole")
        dphi = omega @ phi
        v = np.linalg.solve(metrics.g, p) / model.mass
        if forces is None:
            return v, np.zeros(n), dphi, omega @ mom
        q_i, q_mat = forces
        return v, q_i, dphi, omega @ mom + q_mat

    if isinstance(model, MetricalAffine):
        phi_inv = config.phi_inv()
        omega = model.omega_from_sigma(phi @ mom @ phi_inv, metrics)
        dphi = omega @ phi
        v = np.linalg.solve(metrics.g, p) / model.mass
        if forces is None:
            return v, np.zeros(n), dphi, np.zeros((n, n))
        q_i, q_mat = forces
        return v, q_i, dphi, phi_inv @ q_mat @ phi

    c_metric, c_affine, c_trace = model._coeffs()
    if model.chart == "spatial":
        # spatially-affine family: Cauchy-coupled translations drag the
        # velocity even force-free (the drunk-missile term)
        phi_inv = config.phi_inv()
        sigma_hat = phi_inv @ mom @ phi
        omega_hat = _apply_form(c_metric, c_affine, c_trace, sigma_hat, metrics.eta)
        dphi = phi @ omega_hat
        v = phi @ np.linalg.solve(metrics.eta, phi.T @ p) / model.mass
        dmom = -np.outer(v, p)
        if forces is None:
            return v, np.zeros(n), dphi, dmom
        q_i, q_mat = forces
        return v, q_i, dphi, dmom + q_mat

    # co-moving doubly-affine family; frozen translations pin the centre
    omega_hat = _apply_form(c_metric, c_affine, c_trace, mom, metrics.eta)
    dphi = phi @ omega_hat
    if forces is None:
        q_i, q_hat = np.zeros(n), np.zeros((n, n))
    else:
        q_i, q_mat = forces
        q_hat = config.phi_inv() @ q_mat @ phi
    if model.translation == "frozen":
        return np.zeros(n), np.zeros(n), dphi, q_hat
    v = np.linalg.solve(metrics.g, p) / model.mass
    return v, q_i, dphi, q_hat


def full_rhs(model, pot, state, metrics=None, extra_forces=None):
    """Right-hand side of the balance laws in the model's canonical chart.

    The quadrupole and spatially-affine families evolve (x, p, phi, Sigma);
    the materially-affine family evolves (x, p, phi, Sigma_hat).
    ``extra_forces`` may inject additional generalized forces as a callable
    (config, momenta, metrics) -> (Q_i, Q^i_j), e.g. momentum-proportional
    friction; potentials themselves may not depend on velocities.
    """
    metrics = _metrics_or_identity(metrics, state.n)
    chart = model.chart
    mom = state.mom.Sigma if chart == "spatial" else state.mom.Sigma_hat
    dx, dp, dphi, dmom = _rhs_core(model, pot, state.config, state.mom.p, mom,
                                   metrics, extra_forces)
    return StateRate(dx=dx, dp=dp, dphi=dphi, dmom=dmom, chart=chart)


# ---------------------------------------------------------------------------
# kinematical moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KinematicalMoments:
    """Non-canonical momentum bookkeeping for the quadrupole model."""

    k: np.ndarray
    K: np.ndarray
    K_hat: np.ndarray
    Lambda_O: np.ndarray
    I_O: np.ndarray


def kinematical_moments(state, model, metrics=None, origin=None):
    """Kinematical moments (k, K, K_hat) plus orbital and total affine momenta.

    The canonical momenta are metric index shifts of these: Sigma = K g and
    Sigma_hat = K_hat G with G the pulled-back spatial metric.  The
    co-moving relation runs through G, not the material metric, except at
    metrically-rigid configurations.
    """
    if not isinstance(model, DAlembert):
        raise InvalidParameters("kinematical moments need a quadrupole inertia")
    metrics = _metrics_or_identity(metrics, state.n)
    vel = model.inverse_legendre(state.config, state.mom, metrics)
    k = np.linalg.solve(metrics.g, state.mom.p)
    big_k = model.affine_moment(state.config, vel)
    k_hat = model.comoving_affine_moment(state.config, vel)
    o = np.zeros(state.n) if origin is None else _mat.as_vector(origin, state.n, "origin")
    lam = _mat.outer(state.config.x - o, state.mom.p)
    return KinematicalMoments(k=k, K=big_k, K_hat=k_hat, Lambda_O=lam,
                              I_O=lam + state.mom.Sigma)


# ---------------------------------------------------------------------------
# derived consistency checks
# ---------------------------------------------------------------------------

def dalembert_acceleration(model, pot, state, metrics=None):
    """Second derivative of phi by two routes for the quadrupole model.

    The canonical route differentiates the inverse Legendre map along the
    (phi, Sigma) balance; the kinematical route inverts the affine-moment
    balance dK/dt = phi_dot J phi_dot^T + Q g^{-1}.  Consistent conventions
    make them agree to roundoff.
    """
    if not isinstance(model, DAlembert):
        raise InvalidParameters("the acceleration balance is a quadrupole check")
    metrics = _metrics_or_identity(metrics, state.n)
    phi = state.config.phi
    _, _, q_mat, _ = potential_and_forces(pot, state.config, metrics)

    jq = phi @ model.inertia @ phi.T
    jq_inv = _mat.inv(jq, "spatial quadrupole")
    g_inv = np.linalg.inv(metrics.g)
    omega = g_inv @ state.mom.Sigma.T @ jq_inv
    phi_dot = omega @ phi
    d_sigma = omega @ state.mom.Sigma + q_mat
    d_jq = phi_dot @ model.inertia @ phi.T + phi @ model.inertia @ phi_dot.T
    d_omega = g_inv @ d_sigma.T @ jq_inv - omega @ d_jq @ jq_inv
    canonical = d_omega @ phi + omega @ phi_dot

    moment = q_mat @ g_inv
    kinematical = np.linalg.solve(model.inertia, np.linalg.solve(phi, moment)).T
    return {"canonical": canonical, "kinematical": kinematical}


def total_momentum_rate(model, pot, state, metrics=None, extra_forces=None):
    """Rate of the affine momentum about the origin, by two assemblies.

    For the spatially-affine family the orbital and internal rates combine
    into the moment of forces alone: "direct" sums the chart flow
    d(x p)/dt + dSigma/dt, "balance" is x Q_i + Q.  Their difference is the
    drag term cancelling against the orbital rate.
    """
    if isinstance(model, DAlembert) or model.chart != "spatial":
        raise InvalidParameters(
            "the moment balance check applies to the spatially-affine family")
    metrics = _metrics_or_identity(metrics, state.n)
    rate = full_rhs(model, pot, state, metrics, extra_forces)
    forces = _forces(model, pot, state.config, state.mom.p, state.mom.Sigma,
                     metrics, extra_forces)
    q_i = np.zeros(state.n) if forces is None else forces[0]
    q_mat = np.zeros((state.n, state.n)) if forces is None else forces[1]
    direct = (_mat.outer(rate.dx, state.mom.p)
              + _mat.outer(state.config.x, rate.dp) + rate.dmom)
    balance = _mat.outer(state.config.x, q_i) + q_mat
    return {"direct": direct, "balance": balance}


def translational_velocity_rate(model, pot, state, metrics=None, extra_forces=None):
    """Analytic dv/dt under Cauchy-coupled translations (drunk-missile law).

    The canonical momentum is conserved force-free, the velocity is not:
    m dv/dt = -m C~ (dC/dt) v + C~ Q_i, with dC/dt = -Omega^T C - C Omega.
    """
    if isinstance(model, DAlembert) or model.chart != "spatial":
        raise InvalidParameters(
            "the velocity-rate law applies to the spatially-affine family")
    metrics = _metrics_or_identity(metrics, state.n)
    config = state.config
    phi_inv = config.phi_inv()
    vel = model.inverse_legendre(config, state.mom, metrics)
    omega = vel.phi_dot @ phi_inv
    cauchy = phi_inv.T @ metrics.eta @ phi_inv
    cauchy_inv = config.phi @ np.linalg.solve(metrics.eta, config.phi.T)
    c_dot = -omega.T @ cauchy - cauchy @ omega
    forces = _forces(model, pot, config, state.mom.p, state.mom.Sigma,
                     metrics, extra_forces)
    q_i = np.zeros(state.n) if forces is None else forces[0]
    return -cauchy_inv @ c_dot @ vel.v + cauchy_inv @ q_i / model.mass


# ---------------------------------------------------------------------------
# embedded Runge-Kutta integration
# ---------------------------------------------------------------------------

# Fehlberg 4(5) pair: the fifth-order weights propagate the solution, the
# fourth-order ones supply the embedded error estimate.
_FEHLBERG = {
    "c": (0.0, 0.25, 3.0 / 8.0, 12.0 / 13.0, 1.0, 0.5),
    "a": (
        (),
        (0.25,),
        (3.0 / 32.0, 9.0 / 32.0),
        (1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0),
        (439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0),
        (-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0),
    ),
    "b_high": np.array([16.0 / 135.0, 0.0, 6656.0 / 12825.0,
                        28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0]),
    "b_low": np.array([25.0 / 216.0, 0.0, 1408.0 / 2565.0,
                       2197.0 / 4104.0, -0.2, 0.0]),
}


@dataclass(frozen=True)
class IntegratorSettings:
    """Step control and monitoring knobs for ``integrate``.

    ``invariant_drift`` rejects a step whose energy change exceeds the
    threshold (relative to the initial energy scale) even when the local
    truncation error passed; conservation stays monitored rather than
    enforced, this is only a safety net, and it is disabled when external
    forces make the energy genuinely non-constant.  ``det_guard`` aborts the
    run when det phi falls below that fraction of its initial value.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = None
    min_step: float = None
    first_step: float = None
    sample_count: int = 201
    invariant_drift: float = 1e-8
    det_guard: float = 1e-10
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not (self.rel_tol > 0.0 and self.abs_tol > 0.0):
            raise InvalidParameters("tolerances must be positive")
        if self.sample_count < 2:
            raise InvalidParameters("need at least two samples")


@dataclass
class Trajectory:
    """Sampled solution with per-sample invariant records.

    ``records`` holds the conserved-candidate series: total energy H with
    its kinetic/potential split, the first two trace invariants C1 and C2,
    spin and vorticity magnitudes, linear momentum, the chart momentum
    matrix ("Sigma" or "Sigma_hat"), and the branch-tracked stretch
    logarithms q.
    """

    times: np.ndarray
    states: list
    records: dict
    model: object
    pot: object
    metrics: MetricPair
    chart: str
    diagnostics: dict

    def __len__(self):
        return self.times.shape[0]


def _pack(x, p, phi, mom):
    return np.concatenate((x, p, phi.ravel(), mom.ravel()))


def _unpack(y, n):
    nn = n * n
    return (y[:n], y[n:2 * n],
            y[2 * n:2 * n + nn].reshape(n, n),
            y[2 * n + nn:].reshape(n, n))


def _rk_step(rhs, y, h):
    a, b_high, b_low = _FEHLBERG["a"], _FEHLBERG["b_high"], _FEHLBERG["b_low"]
    k = [rhs(y)]
    for i in range(1, 6):
        yi = y + h * sum(a[i][j] * k[j] for j in range(i))
        k.append(rhs(yi))
    ks = np.stack(k)
    return y + h * (b_high @ ks), h * ((b_high - b_low) @ ks)


_STAGE_ERRORS = (SingularConfiguration, NegativeOrientation,
                 np.linalg.LinAlgError, FloatingPointError, OverflowError)


def integrate(model, pot, state0, t_span, settings=None, metrics=None,
              extra_forces=None):
    """Integrate the balance laws over t_span with embedded RKF4(5) control.

    Samples land exactly on a uniform grid of ``settings.sample_count``
    times.  Raises SingularityApproach when det phi collapses toward zero
    and StepFailure when the controller cannot satisfy the tolerances above
    the minimum step.
    """
    settings = settings if settings is not None else IntegratorSettings()
    metrics = _metrics_or_identity(metrics, state0.n)
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise InvalidParameters("t_span must satisfy t1 > t0")
    span = t1 - t0
    n = state0.n
    chart = model.chart
    mom_key = "Sigma" if chart == "spatial" else "Sigma_hat"

    max_step = settings.max_step if settings.max_step is not None else span / 10.0
    min_step = settings.min_step if settings.min_step is not None else span * 1e-14
    h = settings.first_step if settings.first_step is not None else min(max_step, span / 100.0)

    def rhs(y):
        x, p, phi, mom = _unpack(y, n)
        config = Configuration(phi=phi, x=x)
        return _pack(*_rhs_core(model, pot, config, p, mom, metrics, extra_forces))

    def as_state(y, t):
        x, p, phi, mom = _unpack(y, n)
        config = Configuration(phi=phi, x=x)
        momenta = (Momenta.from_spatial(config, p, mom) if chart == "spatial"
                   else Momenta.from_comoving(config, p, mom))
        return FullPhaseState(config=config, mom=momenta, time=float(t))

    def energy(y):
        state = as_state(y, 0.0)
        return (model.kinetic_hamiltonian(state.config, state.mom, metrics)
                + potential_value(pot, state.config, metrics))

    y = _pack(state0.config.x, state0.mom.p, state0.config.phi,
              state0.mom.Sigma if chart == "spatial" else state0.mom.Sigma_hat)
    det0 = float(np.linalg.det(state0.config.phi))
    e_cur = energy(y)
    # energy guard is meaningless under injected (possibly dissipative) forces
    guard_energy = extra_forces is None
    inv_cap = settings.invariant_drift * max(1.0, abs(e_cur))

    t_eval = np.linspace(t0, t1, settings.sample_count)
    states, rec = [], {key: [] for key in (
        "H", "T", "potential", "C1", "C2", "spin_norm", "vorticity_norm",
        "q", "p", mom_key)}
    hint = None

    def record(t, y, hint):
        state = as_state(y, t)
        states.append(state)
        kin = model.kinetic_hamiltonian(state.config, state.mom, metrics)
        vpot = potential_value(pot, state.config, metrics)
        cas = casimir_invariants(state.mom.Sigma, 2)
        sv = spin_vorticity(state.mom.Sigma, state.mom.Sigma_hat, metrics)
        factors = two_polar_decompose(state.config, metrics, hint=hint)
        rec["H"].append(kin + vpot)
        rec["T"].append(kin)
        rec["potential"].append(vpot)
        rec["C1"].append(cas[0])
        rec["C2"].append(cas[1])
        rec["spin_norm"].append(sv.spin_norm)
        rec["vorticity_norm"].append(sv.vorticity_norm)
        rec["q"].append(factors.q.copy())
        rec["p"].append(state.mom.p.copy())
        rec[mom_key].append(state.mom.Sigma.copy() if chart == "spatial"
                            else state.mom.Sigma_hat.copy())
        return factors

    def abort_small_step(y, t, h_bad):
        det_now = float(np.linalg.det(_unpack(y, n)[2]))
        if det_now < np.sqrt(settings.det_guard) * det0:
            raise SingularityApproach(
                f"det phi fell to {det_now:g} of {det0:g} near t = {t:g}")
        raise StepFailure(
            f"step {h_bad:g} underflowed the minimum {min_step:g} at t = {t:g}")

    hint = record(t0, y, hint)
    accepted = rejected = invariant_rejections = 0
    t = t0
    for target in t_eval[1:]:
        while t < target:
            if accepted + rejected > settings.max_steps:
                raise StepFailure(f"step budget exhausted at t = {t:g}")
            remaining = target - t
            dt = min(h, remaining, max_step)
            to_target = dt >= remaining
            err_norm = None
            with np.errstate(all="ignore"):
                try:
                    y_new, err = _rk_step(rhs, y, dt)
                    scale = (settings.abs_tol
                             + settings.rel_tol * np.maximum(np.abs(y), np.abs(y_new)))
                    err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
                    if not np.isfinite(err_norm):
                        raise FloatingPointError
                except _STAGE_ERRORS:
                    rejected += 1
                    h = 0.5 * dt
                    if h < min_step:
                        abort_small_step(y, t, h)
                    continue
            if err_norm > 1.0:
                rejected += 1
                h = dt * min(0.9, max(0.2, 0.9 * err_norm ** -0.2))
                if h < min_step:
                    abort_small_step(y, t, h)
                continue
            if guard_energy:
                e_new = energy(y_new)
                if abs(e_new - e_cur) > inv_cap:
                    invariant_rejections += 1
                    rejected += 1
                    h = 0.5 * dt
                    if h < min_step:
                        abort_small_step(y, t, h)
                    continue
                e_cur = e_new
            t = target if to_target else t + dt
            y = y_new
            accepted += 1
            det_now = float(np.linalg.det(_unpack(y, n)[2]))
            if det_now < settings.det_guard * det0:
                raise SingularityApproach(
                    f"det phi fell to {det_now:g} of {det0:g} at t = {t:g}")
            grow = 5.0 if err_norm == 0.0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
            if not to_target:
                h = min(max_step, dt * grow)
        hint = record(target, y, hint)

    records = {key: np.asarray(val) for key, val in rec.items()}
    diagnostics = {"accepted": accepted, "rejected": rejected,
                   "invariant_rejections": invariant_rejections,
                   "final_step": h}
    return Trajectory(times=t_eval.copy(), states=states, records=records,
                      model=model, pot=pot, metrics=metrics, chart=chart,
                      diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# invariant monitoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InvariantReport:
    """Max drifts of the model's conserved set plus negative diagnostics.

    Drift is measured against max(1, initial magnitude), so quantities that
    start at zero report absolute deviation.  ``extras`` holds quantities
    the theory predicts NOT to be conserved, for negative checks.
    """

    drifts: dict
    conserved: tuple
    extras: dict

    def within(self, tol, names=None):
        names = self.conserved if names is None else names
        return all(self.drifts[name] <= tol for name in names)


def _drift(series):
    arr = np.asarray(series, dtype=float)
    flat = arr.reshape(arr.shape[0], -1)
    scale = max(1.0, float(np.linalg.norm(flat[0])))
    return float(np.max(np.linalg.norm(flat - flat[0], axis=1)) / scale)


def _k_rate_residual(model, trajectory, metrics):
    # centred difference of K against the kinetic source phi_dot J phi_dot^T
    states = trajectory.states
    t = trajectory.times
    g_inv = np.linalg.inv(metrics.g)
    ks = [s.mom.Sigma @ g_inv for s in states]
    worst = 0.0
    for i in range(1, len(states) - 1):
        rate_fd = (ks[i + 1] - ks[i - 1]) / (t[i + 1] - t[i - 1])
        vel = model.inverse_legendre(states[i].config, states[i].mom, metrics)
        rate_kin = vel.phi_dot @ model.inertia @ vel.phi_dot.T
        worst = max(worst, float(np.linalg.norm(rate_fd - rate_kin)))
    return worst / max(1.0, float(np.linalg.norm(ks[0])))


def monitor_invariants(model, trajectory):
    """Drift report over the conserved set the model actually predicts.

    Geodetic runs check the model's momentum conservation laws; runs under
    doubly-isotropic potentials check the spin and vorticity magnitudes;
    every run checks the energy.  Quantities the theory says drift (the
    co-moving linear momentum, the kinematical moment K, the translational
    velocity under Cauchy coupling) are reported in ``extras`` instead.
    """
    rec = trajectory.records
    states = trajectory.states
    metrics = trajectory.metrics
    geodetic = trajectory.pot is None or trajectory.pot.kind == "none"
    drifts = {"H": _drift(rec["H"])}
    conserved = ["H"]
    extras = {}

    if geodetic:
        if isinstance(model, MetricalAffine):
            drifts["p"] = _drift(rec["p"])
            drifts["v"] = _drift([np.linalg.solve(metrics.g, s.mom.p) / model.mass
                                  for s in states])
            drifts["Sigma_hat"] = _drift([s.mom.Sigma_hat for s in states])
            conserved += ["p", "v", "Sigma_hat"]
            extras["p_hat_drift"] = _drift([s.config.phi.T @ s.mom.p for s in states])
        elif isinstance(model, AffineMetrical) or (
                isinstance(model, AffineAffine) and model.translation == "cauchy"):
            drifts["p"] = _drift(rec["p"])
            drifts["I_O"] = _drift([total_affine_momentum(s.config.x, s.mom.p,
                                                          s.mom.Sigma)
                                    for s in states])
            conserved += ["p", "I_O"]
            if float(np.linalg.norm(states[0].mom.p)) < 1e-12:
                drifts["Sigma"] = _drift([s.mom.Sigma for s in states])
                conserved.append("Sigma")
            else:
                vs = [s.config.phi @ np.linalg.solve(metrics.eta, s.config.phi.T
                                                     @ s.mom.p) / model.mass
                      for s in states]
                extras["v_deviation"] = float(
                    max(np.linalg.norm(v - vs[0]) for v in vs))
                extras["Sigma_drift"] = _drift([s.mom.Sigma for s in states])
        elif isinstance(model, AffineAffine):
            # two-sided invariance: both momentum placements are constant
            drifts["p"] = _drift(rec["p"])
            drifts["Sigma"] = _drift([s.mom.Sigma for s in states])
            drifts["Sigma_hat"] = _drift([s.mom.Sigma_hat for s in states])
            conserved += ["p", "Sigma", "Sigma_hat"]
        elif isinstance(model, DAlembert):
            g_inv = np.linalg.inv(metrics.g)
            extras["K_drift"] = _drift([s.mom.Sigma @ g_inv for s in states])
            extras["K_rate_residual"] = _k_rate_residual(model, trajectory, metrics)

    if trajectory.pot is not None and trajectory.pot.kind in (
            "dilatation_only", "doubly_isotropic"):
        include = True
        if isinstance(model, DAlembert):
            # anisotropic inertia breaks material isotropy of the kinetic term
            ratio = np.trace(model.inertia) / np.trace(metrics.eta)
            include = bool(np.allclose(model.inertia, ratio * metrics.eta,
                                       atol=1e-12))
        if include:
            drifts["spin_norm"] = _drift(rec["spin_norm"])
            drifts["vorticity_norm"] = _drift(rec["vorticity_norm"])
            conserved += ["spin_norm", "vorticity_norm"]

    return InvariantReport(drifts=drifts, conserved=tuple(conserved),
                           extras=extras)
