"""Two-polar reduction of the internal dynamics to a one-dimensional lattice.

The internal configuration factors through orthogonal frames and logarithmic
stretches q; the internal momentum collapses onto the stretch momenta p and
two antisymmetric invariant matrices M and N.  For kinetic energies built
from the affine Casimirs the reduced Hamiltonian is a Sutherland-like chain:
log-stretch "particles" on a line, pair interactions through hyperbolic (or,
for the compact unitary analogue, trigonometric) kernels with M-squared
repulsive and N-squared attractive channels.  This module provides the
reduction and its inverse, the reduced Hamiltonians and vector fields for all
supported kinetic models, a matching adaptive integrator, and reporting
helpers for the dilatation/shear splitting.
"""

from dataclasses import dataclass

import numpy as np

from . import _mat
from .dynamics import (
    FullPhaseState,
    IntegratorSettings,
    _rk_step,
    _stretch_potential,
    dilatational_potential,
)
from .errors import (
    CoincidentInvariants,
    DegenerateSpectrum,
    InvalidParameters,
    SingularInertia,
    StepFailure,
)
from .kinematics import (
    Configuration,
    TwoPolarFactors,
    _metrics_or_identity,
    two_polar_decompose,
)
from .models import AffineAffine, AffineMetrical, DAlembert, MetricalAffine, Momenta

__all__ = [
    "COINCIDENCE_TOL",
    "UnitaryCompact",
    "ReducedPhaseState",
    "ReducedRate",
    "ReducedTrajectory",
    "DilatationSplit",
    "SplitReport",
    "reduce_state",
    "reduce_trajectory",
    "reconstruct_state",
    "reduced_casimirs",
    "reduced_hamiltonian",
    "reduced_rhs",
    "integrate_reduced",
    "sutherland_oracle_rhs",
    "split_dilatation",
    "splitting_report",
    "dilatational_potential",
]

# minimum separation of coupled stretches before the kernels are declared
# singular; below it the off-diagonal reconstruction is ill-posed
COINCIDENCE_TOL = 1e-6

# couplings below this are treated as absent when testing coincidences
_COUPLING_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# reduced-level model and state types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UnitaryCompact:
    """Compact analogue of the affine-affine kinetic energy.

    Lives only at the reduced level: the stretch coordinates become angles
    and the pair kernels trigonometric, with both channels repulsive, so the
    lattice is confined without any potential.  ``affine`` weighs the
    traceless part, ``trace`` the pure-trace part of the metric.
    """

    affine: float
    trace: float = 0.0

    def __post_init__(self):
        if self.affine == 0.0:
            raise InvalidParameters("affine coefficient must be nonzero")

    def _overall(self, n):
        beta = self.affine + n * self.trace
        if beta == 0.0:
            raise SingularInertia(
                f"affine + n*trace vanishes at n = {n}; the overall stretch "
                "momentum has no inverse inertia")
        return beta


@dataclass(frozen=True)
class ReducedPhaseState:
    """Point of the reduced phase space.

    ``q`` are logarithmic stretches with conjugate momenta ``p``; ``M`` and
    ``N`` are the antisymmetric invariant matrices steering the repulsive
    and attractive channels.  ``L`` and ``R`` are the orthogonal spatial and
    material frames in the orthonormal gauge (for non-identity metrics the
    metric frames are ``g^-1/2 L`` and ``eta^-1/2 R``); they carry no weight
    in the reduced flow of (q, p, M, N) but are transported alongside so the
    full configuration can be rebuilt.
    """

    q: np.ndarray
    p: np.ndarray
    M: np.ndarray
    N: np.ndarray
    L: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        n = q.shape[0]
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", _mat.as_vector(p, n, "p"))
        for name in ("M", "N", "L", "R"):
            m = _mat.as_matrix(getattr(self, name), n, name)
            object.__setattr__(self, name, m)
        for name in ("M", "N"):
            m = getattr(self, name)
            gap = np.max(np.abs(m + m.T)) if n else 0.0
            if gap > 1e-12 * max(1.0, float(np.max(np.abs(m)))):
                raise InvalidParameters(f"{name} must be antisymmetric")
        for name in ("L", "R"):
            f = getattr(self, name)
            if np.max(np.abs(f.T @ f - np.eye(n))) > 1e-10:
                raise InvalidParameters(f"frame {name} is not orthogonal")

    @property
    def n(self):
        return self.q.shape[0]

    @property
    def rho_hat(self):
        """Spin seen through the spatial frame: L rho_hat L^T."""
        return (self.N - self.M) / 2.0

    @property
    def tau_hat(self):
        """Negative vorticity seen through the material frame."""
        return -(self.N + self.M) / 2.0

    @property
    def spin_norm(self):
        return float(np.sqrt(np.sum((self.N - self.M) ** 2) / 8.0))

    @property
    def vorticity_norm(self):
        return float(np.sqrt(np.sum((self.N + self.M) ** 2) / 8.0))


@dataclass(frozen=True)
class ReducedRate:
    """Time derivative of a reduced state, frame generators included.

    ``chi_hat`` and ``theta_hat`` are the antisymmetric generators of the
    frames: dL = L chi_hat, dR = R theta_hat.
    """

    dq: np.ndarray
    dp: np.ndarray
    dM: np.ndarray
    dN: np.ndarray
    chi_hat: np.ndarray
    theta_hat: np.ndarray


@dataclass
class ReducedTrajectory:
    """Sampled reduced solution with invariant records.

    ``records`` carries per-sample series: reduced energy H, stretches q,
    momenta p, the linear invariant c1 = sum p, the quadratic invariant c2
    (NaN for models whose full-chart Casimir is not the hyperbolic form),
    and the spin/vorticity magnitudes.
    """

    times: np.ndarray
    states: list
    records: dict
    model: object
    pot: object
    diagnostics: dict

    def __len__(self):
        return self.times.shape[0]


# ---------------------------------------------------------------------------
# reduction and reconstruction
# ---------------------------------------------------------------------------

def _to_factor_hint(hint, g_half_inv, eta_half_inv):
    if hint is None or isinstance(hint, TwoPolarFactors):
        return hint
    if isinstance(hint, ReducedPhaseState):
        return TwoPolarFactors(L=g_half_inv @ hint.L, q=hint.q,
                               R=eta_half_inv @ hint.R)
    raise InvalidParameters(
        "hint must be TwoPolarFactors or ReducedPhaseState")


def _reduce_with_factors(full, metrics, hint):
    config = full.config
    n = config.n
    metrics = _metrics_or_identity(metrics, n)
    if metrics.is_identity():
        g_half = g_half_inv = eta_half = eta_half_inv = np.eye(n)
    else:
        g_half, g_half_inv = _mat.spd_sqrt(metrics.g)
        eta_half, eta_half_inv = _mat.spd_sqrt(metrics.eta)
    factor_hint = _to_factor_hint(hint, g_half_inv, eta_half_inv)
    factors = two_polar_decompose(config, metrics, hint=factor_hint)
    if factors.degenerate and hint is None:
        raise DegenerateSpectrum(
            f"stretch spectrum has coincidences {factors.multiplicity}; "
            "pass a continuity hint to select a branch")
    sigma_tilde = np.linalg.solve(factors.L, full.mom.Sigma @ factors.L)
    p = np.diag(sigma_tilde).copy()
    rho = sigma_tilde - sigma_tilde.T
    e = np.exp(factors.q)
    ratio = e[:, None] / e[None, :]
    tau = ratio * sigma_tilde.T - sigma_tilde / ratio
    state = ReducedPhaseState(q=factors.q.copy(), p=p,
                              M=-(rho + tau), N=rho - tau,
                              L=g_half @ factors.L, R=eta_half @ factors.R)
    return state, factors


def reduce_state(full, metrics=None, hint=None):
    """Map a full phase-space point to the reduced chart.

    Raises DegenerateSpectrum on coincident stretches unless ``hint`` (a
    TwoPolarFactors or a previous ReducedPhaseState) selects the branch.
    Translational degrees of freedom are dropped; pair the reduced state
    with the original (x, p) if they matter.
    """
    return _reduce_with_factors(full, metrics, hint)[0]


def reduce_trajectory(trajectory, metrics=None):
    """Reduce every sample of a full trajectory with branch continuity.

    The factor hint is chained sample to sample, so the stretch ordering
    and frame signs follow the motion instead of snapping back to the
    descending-q convention at each time.
    """
    metrics = trajectory.metrics if metrics is None else metrics
    out, hint = [], None
    for state in trajectory.states:
        reduced, hint = _reduce_with_factors(state, metrics, hint)
        out.append(reduced)
    return out


def reconstruct_state(reduced, metrics=None):
    """Rebuild a full phase-space point from a reduced one.

    The translation block is set to zero.  Raises CoincidentInvariants when
    an M-coupled stretch pair sits closer than COINCIDENCE_TOL, where the
    off-diagonal momentum is unbounded.
    """
    n = reduced.n
    metrics = _metrics_or_identity(metrics, n)
    q, p, M, N = reduced.q, reduced.p, reduced.M, reduced.N
    d = q[:, None] - q[None, :]
    off = ~np.eye(n, dtype=bool)
    coupled = np.abs(M) > _COUPLING_FLOOR
    close = np.abs(d) < COINCIDENCE_TOL
    if np.any(coupled & close & off):
        raise CoincidentInvariants(
            "stretch coincidence on an M-coupled pair; the reduced chart "
            f"degenerates below separation {COINCIDENCE_TOL:g}")
    half = d / 2.0
    sh = np.sinh(half)
    ch = np.cosh(half)
    sigma_tilde = np.diag(p).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        m_over_sh = np.where(coupled, M / np.where(sh == 0.0, 1.0, sh), 0.0)
    sigma_tilde[off] = (np.exp(half) * (N / ch - m_over_sh) / 4.0)[off]
    phi_on = (reduced.L * np.exp(q)[None, :]) @ reduced.R.T
    sigma_on = reduced.L @ sigma_tilde @ reduced.L.T
    if metrics.is_identity():
        phi, sigma = phi_on, sigma_on
    else:
        g_half, g_half_inv = _mat.spd_sqrt(metrics.g)
        eta_half, _ = _mat.spd_sqrt(metrics.eta)
        phi = g_half_inv @ phi_on @ eta_half
        sigma = g_half_inv @ sigma_on @ g_half
    config = Configuration(phi=phi)
    mom = Momenta.from_spatial(config, np.zeros(n), sigma)
    return FullPhaseState(config=config, mom=mom)


def reduced_casimirs(reduced):
    """Trace invariants (c1, c2) of the full momentum, evaluated reducedly.

    c1 = sum p; c2 reproduces Tr Sigma^2 through the hyperbolic pair form,
    exact in the reduced variables whatever the kinetic model.
    """
    q, p, M, N = reduced.q, reduced.p, reduced.M, reduced.N
    k, c = _hyperbolic_kernels(q, M)
    c2 = float(np.sum(p ** 2) + (np.sum(M ** 2 * k) - np.sum(N ** 2 * c)) / 16.0)
    return float(np.sum(p)), c2


# ---------------------------------------------------------------------------
# kernels and per-model kinetic terms
# ---------------------------------------------------------------------------

def _guard_coincidence(closeness, coupling, label):
    bad = (np.abs(coupling) > _COUPLING_FLOOR) & closeness
    np.fill_diagonal(bad, False)
    if np.any(bad):
        pairs = np.argwhere(bad)
        a, b = pairs[0]
        raise CoincidentInvariants(
            f"{label}-coupled stretches {a} and {b} are coincident at "
            f"tolerance {COINCIDENCE_TOL:g}")


def _hyperbolic_kernels(q, M):
    """1/sinh^2 and 1/cosh^2 of half separations, singular pairs guarded."""
    d = q[:, None] - q[None, :]
    _guard_coincidence(np.abs(d) < COINCIDENCE_TOL, M, "M")
    half = d / 2.0
    sh2 = np.sinh(half) ** 2
    safe = np.where(sh2 == 0.0, 1.0, sh2)
    k = np.where(np.abs(M) > _COUPLING_FLOOR, 1.0 / safe, 0.0)
    np.fill_diagonal(k, 0.0)
    c = 1.0 / np.cosh(half) ** 2
    np.fill_diagonal(c, 0.0)
    return k, c


def _trigonometric_kernels(q, M, N):
    """1/sin^2 and 1/cos^2 of half angles; both channels can be singular."""
    d = q[:, None] - q[None, :]
    s, co = np.sin(d / 2.0), np.cos(d / 2.0)
    _guard_coincidence(np.abs(s) < COINCIDENCE_TOL / 2.0, M, "M")
    _guard_coincidence(np.abs(co) < COINCIDENCE_TOL / 2.0, N, "N")
    s2, c2 = s ** 2, co ** 2
    k = np.where(np.abs(M) > _COUPLING_FLOOR,
                 1.0 / np.where(s2 == 0.0, 1.0, s2), 0.0)
    c = np.where(np.abs(N) > _COUPLING_FLOOR,
                 1.0 / np.where(c2 == 0.0, 1.0, c2), 0.0)
    np.fill_diagonal(k, 0.0)
    np.fill_diagonal(c, 0.0)
    return k, c


def _momentum_terms(p, alpha, beta, n):
    psum = float(np.sum(p))
    h = (float(np.sum((p[:, None] - p[None, :]) ** 2)) / (4.0 * n * alpha)
         + psum ** 2 / (2.0 * n * beta))
    dq = (n * p - psum) / (alpha * n) + psum / (n * beta)
    return h, dq


def _affine_kinetic(q, p, M, N, alpha, beta, extra):
    n = q.shape[0]
    h_mom, dq = _momentum_terms(p, alpha, beta, n)
    k, c = _hyperbolic_kernels(q, M)
    h = h_mom + (np.sum(M ** 2 * k) - np.sum(N ** 2 * c)) / (32.0 * alpha)
    hm = M * k / (16.0 * alpha)
    hn = -N * c / (16.0 * alpha)
    # d/dq of the kernels: k' = -cosh/sinh^3, c' = -sinh/cosh^3 at half sep
    half = (q[:, None] - q[None, :]) / 2.0
    sh = np.sinh(half)
    with np.errstate(divide="ignore", invalid="ignore"):
        kp = np.where(k > 0.0, -np.cosh(half) / np.where(sh == 0.0, 1.0, sh) ** 3, 0.0)
    cp = -sh / np.cosh(half) ** 3
    np.fill_diagonal(cp, 0.0)
    dhdq = np.sum(M ** 2 * kp - N ** 2 * cp, axis=1) / (16.0 * alpha)
    hm_f, hn_f = hm, hn
    if extra is not None:
        kind, coeff = extra
        if kind == "vorticity":
            h += coeff * np.sum((M + N) ** 2) / 8.0
            shift = coeff * (M + N) / 4.0
            hm_f = hm + shift
            hn_f = hn + shift
        else:
            h += coeff * np.sum((N - M) ** 2) / 8.0
            shift = coeff * (N - M) / 4.0
            hm_f = hm - shift
            hn_f = hn + shift
    return {"H": h, "dq": dq, "dHdq": dhdq,
            "HM": hm, "HN": hn, "HM_f": hm_f, "HN_f": hn_f}


def _extra_coefficient(model, kind):
    i, a = model.metrical, model.affine
    coeff = i / (2.0 * (i * i - a * a))
    return (kind, coeff)


def _dalembert_scalar_inertia(model):
    j = model.inertia
    i_s = float(j[0, 0])
    if not np.allclose(j, i_s * np.eye(j.shape[0]), atol=1e-12 * max(1.0, abs(i_s))):
        raise InvalidParameters(
            "reduced chart needs an isotropic inertia; got an anisotropic one")
    return i_s


def _dalembert_kinetic(q, p, M, N, i_s):
    n = q.shape[0]
    qe = np.exp(q)
    diff = qe[:, None] - qe[None, :]
    _guard_coincidence(np.abs(diff) < COINCIDENCE_TOL * (qe[:, None] + qe[None, :]) / 2.0,
                       M, "M")
    ssum = qe[:, None] + qe[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_d2 = np.where(np.abs(M) > _COUPLING_FLOOR,
                          1.0 / np.where(diff == 0.0, 1.0, diff) ** 2, 0.0)
    np.fill_diagonal(inv_d2, 0.0)
    inv_s2 = 1.0 / ssum ** 2
    np.fill_diagonal(inv_s2, 0.0)
    pe2 = p * np.exp(-2.0 * q)
    h = (float(np.sum(p * pe2)) / 2.0
         + (np.sum(M ** 2 * inv_d2) + np.sum(N ** 2 * inv_s2)) / 8.0) / i_s
    dq = pe2 / i_s
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_d3 = np.where(inv_d2 > 0.0,
                          1.0 / np.where(diff == 0.0, 1.0, diff) ** 3, 0.0)
    np.fill_diagonal(inv_d3, 0.0)
    inv_s3 = 1.0 / ssum ** 3
    np.fill_diagonal(inv_s3, 0.0)
    dhdq = (-p * pe2
            - qe * np.sum(M ** 2 * inv_d3 + N ** 2 * inv_s3, axis=1) / 2.0) / i_s
    hm = M * inv_d2 / (4.0 * i_s)
    hn = N * inv_s2 / (4.0 * i_s)
    return {"H": h, "dq": dq, "dHdq": dhdq,
            "HM": hm, "HN": hn, "HM_f": hm, "HN_f": hn}


def _unitary_kinetic(q, p, M, N, model):
    n = q.shape[0]
    a = model.affine
    beta = model._overall(n)
    h_mom, dq = _momentum_terms(p, a, beta, n)
    k, c = _trigonometric_kernels(q, M, N)
    h = h_mom + (np.sum(M ** 2 * k) + np.sum(N ** 2 * c)) / (32.0 * a)
    hm = M * k / (16.0 * a)
    hn = N * c / (16.0 * a)
    half = (q[:, None] - q[None, :]) / 2.0
    s, co = np.sin(half), np.cos(half)
    with np.errstate(divide="ignore", invalid="ignore"):
        kp = np.where(k > 0.0, -co / np.where(s == 0.0, 1.0, s) ** 3, 0.0)
        cp = np.where(c > 0.0, s / np.where(co == 0.0, 1.0, co) ** 3, 0.0)
    dhdq = np.sum(M ** 2 * kp + N ** 2 * cp, axis=1) / (16.0 * a)
    return {"H": h, "dq": dq, "dHdq": dhdq,
            "HM": hm, "HN": hn, "HM_f": hm, "HN_f": hn}


def _kinetic_terms(model, q, p, M, N):
    n = q.shape[0]
    if isinstance(model, (AffineAffine, AffineMetrical, MetricalAffine)):
        if model.dim != n:
            raise InvalidParameters(
                f"model dimension {model.dim} does not match state dimension {n}")
    if isinstance(model, DAlembert) and model.inertia.shape[0] != n:
        raise InvalidParameters(
            f"inertia dimension {model.inertia.shape[0]} does not match state "
            f"dimension {n}")
    if isinstance(model, AffineAffine):
        alpha = model.affine
        beta = alpha + n * model.trace
        if beta == 0.0:
            raise SingularInertia("affine + n*trace vanishes in the reduced chart")
        return _affine_kinetic(q, p, M, N, alpha, beta, None)
    if isinstance(model, AffineMetrical):
        alpha = model.metrical + model.affine
        beta = alpha + n * model.trace
        return _affine_kinetic(q, p, M, N, alpha, beta,
                               _extra_coefficient(model, "vorticity"))
    if isinstance(model, MetricalAffine):
        alpha = model.metrical + model.affine
        beta = alpha + n * model.trace
        return _affine_kinetic(q, p, M, N, alpha, beta,
                               _extra_coefficient(model, "spin"))
    if isinstance(model, DAlembert):
        return _dalembert_kinetic(q, p, M, N, _dalembert_scalar_inertia(model))
    if isinstance(model, UnitaryCompact):
        return _unitary_kinetic(q, p, M, N, model)
    raise InvalidParameters(f"no reduced form for model {type(model).__name__}")


def _potential_terms(pot, q):
    if pot is None or pot.kind == "none":
        return 0.0, np.zeros_like(q)
    if pot.kind == "general_config":
        raise InvalidParameters(
            "general_config potentials see the frames; the reduced chart "
            "supports stretch-only potentials")
    return _stretch_potential(pot, q)


# ---------------------------------------------------------------------------
# reduced Hamiltonian and flow
# ---------------------------------------------------------------------------

def reduced_hamiltonian(model, pot, reduced):
    """Energy of a reduced state under the given kinetic model and potential."""
    kin = _kinetic_terms(model, reduced.q, reduced.p, reduced.M, reduced.N)
    return float(kin["H"] + _potential_terms(pot, reduced.q)[0])


def _rate_arrays(model, pot, q, p, M, N, freeze_spin):
    kin = _kinetic_terms(model, q, p, M, N)
    _, pgrad = _potential_terms(pot, q)
    dp = -(kin["dHdq"] + pgrad)
    hm, hn = kin["HM"], kin["HN"]
    if freeze_spin:
        dM = np.zeros_like(M)
        dN = np.zeros_like(N)
    else:
        dM = 2.0 * ((M @ hm - hm @ M) + (N @ hn - hn @ N))
        dN = 2.0 * ((N @ hm - hm @ N) + (M @ hn - hn @ M))
    chi = 2.0 * (kin["HM_f"] - kin["HN_f"])
    theta = 2.0 * (kin["HM_f"] + kin["HN_f"])
    return kin["dq"], dp, dM, dN, chi, theta


def reduced_rhs(model, pot, reduced, freeze_spin=False):
    """Hamiltonian vector field on the reduced chart.

    ``freeze_spin`` pins M and N to their initial values, restricting the
    flow to the Sutherland-like subfamily; for n >= 3 a constant-M slice is
    not invariant under the exact flow, so freezing is an explicit modelling
    choice rather than a shortcut.
    """
    dq, dp, dM, dN, chi, theta = _rate_arrays(
        model, pot, reduced.q, reduced.p, reduced.M, reduced.N, freeze_spin)
    return ReducedRate(dq=dq, dp=dp, dM=dM, dN=dN, chi_hat=chi, theta_hat=theta)


def _pack_reduced(q, p, M, N, L, R, iu):
    return np.concatenate([q, p, M[iu], N[iu], L.ravel(), R.ravel()])


def _unpack_reduced(y, n, iu):
    q = y[:n]
    p = y[n:2 * n]
    npairs = n * (n - 1) // 2
    M = np.zeros((n, n))
    N = np.zeros((n, n))
    M[iu] = y[2 * n:2 * n + npairs]
    N[iu] = y[2 * n + npairs:2 * n + 2 * npairs]
    M -= M.T
    N -= N.T
    base = 2 * n + 2 * npairs
    L = y[base:base + n * n].reshape(n, n)
    R = y[base + n * n:].reshape(n, n)
    return q, p, M, N, L, R


def _nearest_orthogonal(m):
    u, _, vt = np.linalg.svd(m)
    return u @ vt


def integrate_reduced(model, pot, reduced0, t_span, settings=None,
                      freeze_spin=False):
    """Integrate the reduced flow with the same embedded RKF4(5) controller
    used for the full chart, energy guard included.

    Frames are transported with the state and re-orthogonalized only at the
    sample times.  A stretch coincidence on a coupled pair raises
    CoincidentInvariants; it marks a genuine chart boundary, not a step-size
    problem.
    """
    settings = settings if settings is not None else IntegratorSettings()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise InvalidParameters("t_span must satisfy t1 > t0")
    span = t1 - t0
    n = reduced0.n
    iu = np.triu_indices(n, 1)

    max_step = settings.max_step if settings.max_step is not None else span / 10.0
    min_step = settings.min_step if settings.min_step is not None else span * 1e-14
    h = settings.first_step if settings.first_step is not None else min(max_step, span / 100.0)

    def rhs(y):
        q, p, M, N, L, R = _unpack_reduced(y, n, iu)
        dq, dp, dM, dN, chi, theta = _rate_arrays(
            model, pot, q, p, M, N, freeze_spin)
        return _pack_reduced(dq, dp, dM, dN, L @ chi, R @ theta, iu)

    def energy(y):
        q, p, M, N, _, _ = _unpack_reduced(y, n, iu)
        kin = _kinetic_terms(model, q, p, M, N)
        return float(kin["H"] + _potential_terms(pot, q)[0])

    y = _pack_reduced(reduced0.q, reduced0.p, reduced0.M, reduced0.N,
                      reduced0.L, reduced0.R, iu)
    e_cur = energy(y)
    inv_cap = settings.invariant_drift * max(1.0, abs(e_cur))
    record_c2 = isinstance(model, (AffineAffine, AffineMetrical, MetricalAffine))

    t_eval = np.linspace(t0, t1, settings.sample_count)
    states = []
    rec = {key: [] for key in ("H", "q", "p", "c1", "c2",
                               "spin_norm", "vorticity_norm")}

    def record(t, y):
        q, p, M, N, L, R = _unpack_reduced(y, n, iu)
        state = ReducedPhaseState(q=q.copy(), p=p.copy(), M=M, N=N,
                                  L=_nearest_orthogonal(L),
                                  R=_nearest_orthogonal(R))
        states.append(state)
        rec["H"].append(energy(y))
        rec["q"].append(q.copy())
        rec["p"].append(p.copy())
        if record_c2:
            c1, c2 = reduced_casimirs(state)
        else:
            c1, c2 = float(np.sum(p)), float("nan")
        rec["c1"].append(c1)
        rec["c2"].append(c2)
        rec["spin_norm"].append(state.spin_norm)
        rec["vorticity_norm"].append(state.vorticity_norm)

    # stage failures worth retrying at a smaller step; chart-boundary errors
    # (CoincidentInvariants) propagate
    stage_errors = (FloatingPointError, OverflowError)

    record(t0, y)
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
            with np.errstate(over="raise", invalid="raise", divide="ignore"):
                try:
                    y_new, err = _rk_step(rhs, y, dt)
                    scale = (settings.abs_tol
                             + settings.rel_tol * np.maximum(np.abs(y), np.abs(y_new)))
                    err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
                    if not np.isfinite(err_norm):
                        raise FloatingPointError
                except stage_errors:
                    rejected += 1
                    h = 0.5 * dt
                    if h < min_step:
                        raise StepFailure(
                            f"step underflowed the minimum {min_step:g} at t = {t:g}")
                    continue
            if err_norm > 1.0:
                rejected += 1
                h = dt * min(0.9, max(0.2, 0.9 * err_norm ** -0.2))
                if h < min_step:
                    raise StepFailure(
                        f"step underflowed the minimum {min_step:g} at t = {t:g}")
                continue
            e_new = energy(y_new)
            if abs(e_new - e_cur) > inv_cap:
                invariant_rejections += 1
                rejected += 1
                h = 0.5 * dt
                if h < min_step:
                    raise StepFailure(
                        f"energy guard pinned the step below {min_step:g} at t = {t:g}")
                continue
            e_cur = e_new
            t = target if to_target else t + dt
            y = y_new
            accepted += 1
            grow = 5.0 if err_norm == 0.0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
            if not to_target:
                h = min(max_step, dt * grow)
        record(target, y)

    records = {key: np.asarray(val) for key, val in rec.items()}
    diagnostics = {"accepted": accepted, "rejected": rejected,
                   "invariant_rejections": invariant_rejections,
                   "final_step": h}
    return ReducedTrajectory(times=t_eval.copy(), states=states,
                             records=records, model=model, pot=pot,
                             diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# independent oracle and splitting reports
# ---------------------------------------------------------------------------

def sutherland_oracle_rhs(q, p, coupling):
    """Textbook hyperbolic Sutherland vector field, written from the
    Hamiltonian sum(p^2)/2 + (coupling^2/16) sum_{a<b} sinh^-2((qa-qb)/2).

    Kept deliberately independent of the reduced machinery above; tests pin
    the frozen-spin single-channel flow against it.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    n = q.shape[0]
    dp = np.zeros(n)
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            half = (q[a] - q[b]) / 2.0
            if abs(half) < COINCIDENCE_TOL / 2.0:
                raise CoincidentInvariants(
                    f"oracle particles {a} and {b} are coincident")
            dp[a] += (coupling ** 2 / 16.0) * np.cosh(half) / np.sinh(half) ** 3
    return p.copy(), dp


@dataclass(frozen=True)
class DilatationSplit:
    """Multiplicative volume/shape splitting of a configuration-momentum pair.

    phi = exp(q_mean) psi with det psi = 1; Sigma = sigma_dev + (p_dil/n) Id
    with traceless sigma_dev.  q_mean matches the mean of the two-polar
    stretches for identity metrics.
    """

    q_mean: float
    p_dil: float
    psi: np.ndarray
    sigma_dev: np.ndarray

    def __post_init__(self):
        n = self.psi.shape[0]
        if abs(np.linalg.det(self.psi) - 1.0) > 1e-10:
            raise InvalidParameters("psi must be unimodular")
        if abs(np.trace(self.sigma_dev)) > 1e-10 * max(1.0, float(np.max(np.abs(self.sigma_dev)))) * n:
            raise InvalidParameters("sigma_dev must be traceless")


def split_dilatation(config, Sigma):
    """Split off the dilatational degree of freedom from (phi, Sigma)."""
    n = config.n
    Sigma = _mat.as_matrix(Sigma, n, "Sigma")
    q_mean = float(np.log(np.linalg.det(config.phi))) / n
    p_dil = float(np.trace(Sigma))
    psi = np.exp(-q_mean) * config.phi
    sigma_dev = Sigma - (p_dil / n) * np.eye(n)
    return DilatationSplit(q_mean=q_mean, p_dil=p_dil, psi=psi,
                           sigma_dev=sigma_dev)


@dataclass(frozen=True)
class SplitReport:
    """Additive decomposition of the reduced kinetic energy.

    ``shear`` is the quadratic Casimir of the traceless block over twice its
    inertia, ``dilatation`` the overall-stretch term, ``extra`` the spin or
    vorticity remainder carried by mixed models.  ``relative_momentum`` and
    ``overall_momentum`` split sum(p^2) into shape and volume channels.
    The three energy parts sum to ``total``.
    """

    casimir_sl: float
    shear: float
    dilatation: float
    extra: float
    total: float
    relative_momentum: float
    overall_momentum: float


def splitting_report(model, reduced):
    """Decompose the reduced kinetic energy of a Casimir-built model.

    DAlembert energies do not split along the traceless/trace line, so they
    are rejected.
    """
    q, p, M, N = reduced.q, reduced.p, reduced.M, reduced.N
    n = reduced.n
    psum = float(np.sum(p))
    rel = float(np.sum((p[:, None] - p[None, :]) ** 2)) / (2.0 * n)
    overall = psum ** 2 / n
    if isinstance(model, (AffineAffine, AffineMetrical, MetricalAffine)):
        i = model.metrical if not isinstance(model, AffineAffine) else 0.0
        alpha = i + model.affine
        beta = alpha + n * model.trace
        if beta == 0.0:
            raise SingularInertia("affine + n*trace vanishes in the reduced chart")
        k, c = _hyperbolic_kernels(q, M)
        cas = rel + (np.sum(M ** 2 * k) - np.sum(N ** 2 * c)) / 16.0
        extra = 0.0
        if isinstance(model, (AffineMetrical, MetricalAffine)):
            coeff = i / (2.0 * (i * i - model.affine ** 2))
            carrier = (M + N) if isinstance(model, AffineMetrical) else (N - M)
            extra = coeff * float(np.sum(carrier ** 2)) / 8.0
    elif isinstance(model, UnitaryCompact):
        alpha = model.affine
        beta = model._overall(n)
        k, c = _trigonometric_kernels(q, M, N)
        cas = rel + (np.sum(M ** 2 * k) + np.sum(N ** 2 * c)) / 16.0
        extra = 0.0
    else:
        raise InvalidParameters(
            "only Casimir-built kinetic energies admit this splitting")
    shear = cas / (2.0 * alpha)
    dilatation = psum ** 2 / (2.0 * n * beta)
    return SplitReport(casimir_sl=float(cas), shear=float(shear),
                       dilatation=float(dilatation), extra=float(extra),
                       total=float(shear + dilatation + extra),
                       relative_momentum=rel, overall_momentum=overall)
