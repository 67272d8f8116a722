"""Configuration kinematics of an affinely deforming body.

The internal configuration is an orientation-preserving linear map ``phi``
from material to spatial axes plus a translation ``x``.  This module holds
the chart-level operations that need no inertia data: velocity forms,
deformation tensors and their invariants, polar and two-polar factorizations,
volume measures, and the spin/vorticity parts of the momentum maps.
"""

from dataclasses import dataclass, field
from itertools import permutations, product

import numpy as np

from . import _mat
from .errors import DegenerateSpectrum, NegativeOrientation, SingularConfiguration

__all__ = [
    "MetricPair",
    "Configuration",
    "VelocityState",
    "AffineVelocities",
    "DeformationState",
    "PolarFactors",
    "TwoPolarFactors",
    "VolumeRatio",
    "SpinVorticity",
    "affine_velocities",
    "deformation_tensors",
    "deformation_invariants",
    "polar_decompose",
    "two_polar_decompose",
    "volume_ratio",
    "spin_vorticity",
]


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricPair:
    """Spatial metric ``g`` and material metric ``eta``; both SPD.

    Arrays are treated as read-only after construction.
    """

    g: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        g = _mat.check_spd(self.g, "spatial metric g")
        eta = _mat.check_spd(self.eta, "material metric eta")
        if g.shape != eta.shape:
            raise ValueError("g and eta must have the same dimension")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), np.eye(n))

    @property
    def n(self):
        return self.g.shape[0]

    def is_identity(self):
        n = self.n
        return bool(
            np.array_equal(self.g, np.eye(n)) and np.array_equal(self.eta, np.eye(n))
        )


def _metrics_or_identity(metrics, n):
    if metrics is None:
        return MetricPair.identity(n)
    if metrics.n != n:
        raise ValueError(f"metric dimension {metrics.n} does not match state dimension {n}")
    return metrics


@dataclass(frozen=True)
class Configuration:
    """Translation ``x`` and internal configuration ``phi`` with det phi > 0."""

    phi: np.ndarray
    x: np.ndarray = None

    def __post_init__(self):
        phi = _mat.as_matrix(self.phi, name="phi")
        n = phi.shape[0]
        x = np.zeros(n) if self.x is None else _mat.as_vector(self.x, n, "x")
        d = np.linalg.det(phi)
        if d == 0.0 or not np.isfinite(d):
            raise SingularConfiguration(f"det phi = {d!r}")
        if d < 0.0:
            raise NegativeOrientation(f"det phi = {d:g} < 0")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "x", x)

    @property
    def n(self):
        return self.phi.shape[0]

    def phi_inv(self):
        return _mat.inv(self.phi, "phi")


@dataclass(frozen=True)
class VelocityState:
    """Translational velocity ``v`` and configuration velocity ``phi_dot``."""

    phi_dot: np.ndarray
    v: np.ndarray = None

    def __post_init__(self):
        pd = _mat.as_matrix(self.phi_dot, name="phi_dot")
        n = pd.shape[0]
        v = np.zeros(n) if self.v is None else _mat.as_vector(self.v, n, "v")
        object.__setattr__(self, "phi_dot", pd)
        object.__setattr__(self, "v", v)

    @property
    def n(self):
        return self.phi_dot.shape[0]


@dataclass(frozen=True)
class AffineVelocities:
    """Spatial form ``Omega``, co-moving form ``Omega_hat``, co-moving ``v_hat``."""

    Omega: np.ndarray
    Omega_hat: np.ndarray
    v_hat: np.ndarray


@dataclass(frozen=True)
class DeformationState:
    """Green/Cauchy deformation tensors, their inverses, mixed forms, strains."""

    G: np.ndarray
    C: np.ndarray
    G_inv: np.ndarray
    C_inv: np.ndarray
    G_mixed: np.ndarray  # eta^-1 G, eigenvalues exp(2 q^a)
    C_mixed: np.ndarray  # g^-1 C, eigenvalues exp(-2 q^a)
    E: np.ndarray        # Lagrange strain (G - eta)/2
    e: np.ndarray        # Euler strain (g - C)/2


@dataclass(frozen=True)
class PolarFactors:
    """One-sided polar splitting phi = U A into isometry times stretch."""

    U: np.ndarray
    A: np.ndarray


@dataclass(frozen=True)
class TwoPolarFactors:
    """Two-sided factorization phi = L D R^-1.

    ``L`` has g-orthonormal columns, ``R`` eta-orthonormal columns, both with
    positive orientation (determinant +1 for identity metrics).  ``q`` holds
    the logarithmic stretches, descending unless a continuity hint selected
    another branch.  ``degenerate`` flags stretch coincidences at tolerance
    1e-8; ``multiplicity`` gives the coincidence block sizes in order.
    """

    L: np.ndarray
    q: np.ndarray
    R: np.ndarray
    degenerate: bool = False
    multiplicity: tuple = ()

    @property
    def n(self):
        return self.q.shape[0]

    @property
    def D(self):
        return np.diag(np.exp(self.q))

    def compose(self, metrics=None):
        """Rebuild phi from the factors."""
        metrics = _metrics_or_identity(metrics, self.n)
        r_inv = self.R.T @ metrics.eta
        return self.L @ self.D @ r_inv


@dataclass(frozen=True)
class VolumeRatio:
    """Metric volume ratio and its logarithmic companions."""

    delta: float
    log_delta: float
    linear_scale: float  # delta**(1/n)
    q_mean: float        # log_delta / n


@dataclass(frozen=True)
class SpinVorticity:
    """Spin (g-skew part doubled) and vorticity (eta-skew part doubled)."""

    S: np.ndarray
    V: np.ndarray
    spin_norm: float
    vorticity_norm: float


# ---------------------------------------------------------------------------
# velocity forms
# ---------------------------------------------------------------------------

def affine_velocities(config, vel, metrics=None):
    """Spatial and co-moving velocity forms of a configuration velocity.

    Omega = phi_dot . phi^-1 acts on spatial axes, Omega_hat = phi^-1 . phi_dot
    on material axes, and v_hat = phi^-1 v is the co-moving translational
    velocity.  The two matrix forms are similar via phi.
    """
    phi_inv = config.phi_inv()
    omega = vel.phi_dot @ phi_inv
    omega_hat = phi_inv @ vel.phi_dot
    v_hat = phi_inv @ vel.v
    return AffineVelocities(Omega=omega, Omega_hat=omega_hat, v_hat=v_hat)


# ---------------------------------------------------------------------------
# deformation measures
# ---------------------------------------------------------------------------

def deformation_tensors(config, metrics=None):
    """Green and Cauchy deformation tensors with inverses, mixed forms, strains.

    G = phi^T g phi is the Green tensor (material legs), C = phi^-T eta phi^-1
    the Cauchy tensor (spatial legs).  The mixed forms eta^-1 G and g^-1 C
    share reciprocal spectra exp(+-2 q^a); the strains are
    E = (G - eta)/2 and e = (g - C)/2.
    """
    metrics = _metrics_or_identity(metrics, config.n)
    phi = config.phi
    phi_inv = config.phi_inv()
    G = phi.T @ metrics.g @ phi
    C = phi_inv.T @ metrics.eta @ phi_inv
    G_inv = _mat.inv(G, "G")
    C_inv = phi @ np.linalg.solve(metrics.eta, phi.T)
    G_mixed = np.linalg.solve(metrics.eta, G)
    C_mixed = np.linalg.solve(metrics.g, C)
    E = 0.5 * (G - metrics.eta)
    e = 0.5 * (metrics.g - C)
    return DeformationState(
        G=G, C=C, G_inv=G_inv, C_inv=C_inv,
        G_mixed=G_mixed, C_mixed=C_mixed, E=E, e=e,
    )


_INVARIANT_BASES = ("trace_g", "trace_c", "eigen")


def deformation_invariants(config, metrics=None, basis="trace_g"):
    """Isometry-insensitive deformation invariants, n of them.

    basis "trace_g" returns Tr((eta^-1 G)^k) for k = 1..n, "trace_c" the same
    for g^-1 C, and "eigen" the eigenvalues of eta^-1 G in descending order.
    """
    if basis not in _INVARIANT_BASES:
        raise ValueError(f"basis must be one of {_INVARIANT_BASES}, got {basis!r}")
    metrics = _metrics_or_identity(metrics, config.n)
    defo = deformation_tensors(config, metrics)
    n = config.n
    if basis == "eigen":
        lam = _pencil_eigvalsh(defo.G, metrics.eta)
        return lam[::-1].copy()  # descending
    m = defo.G_mixed if basis == "trace_g" else defo.C_mixed
    out = np.empty(n)
    acc = np.eye(n)
    for k in range(n):
        acc = acc @ m
        out[k] = np.trace(acc)
    return out


def _pencil_eigvalsh(a, b):
    """Ascending eigenvalues of the SPD pencil a r = lambda b r."""
    b_half, b_half_inv = _mat.spd_sqrt(b)
    sym = b_half_inv @ a @ b_half_inv
    return np.linalg.eigvalsh(0.5 * (sym + sym.T))


# ---------------------------------------------------------------------------
# polar factorizations
# ---------------------------------------------------------------------------

def polar_decompose(config, metrics=None):
    """One-sided polar splitting phi = U A.

    Parameters
    ----------
    config : Configuration
        Internal configuration with positive determinant.
    metrics : MetricPair, optional
        Spatial/material metrics; identity when omitted.

    Returns
    -------
    PolarFactors
        ``U`` maps material to spatial axes isometrically (U^T g U = eta) and
        ``A`` is the right stretch, eta-symmetric and positive-definite.

    Notes
    -----
    The factors are assembled from the two-sided factorization: with
    phi = L D R^-1 one has U = L R^-1 and A = R D R^-1, which reduces to the
    classical orthogonal-times-symmetric splitting for identity metrics.
    """
    metrics = _metrics_or_identity(metrics, config.n)
    two = two_polar_decompose(config, metrics)
    r_inv = two.R.T @ metrics.eta
    U = two.L @ r_inv
    A = two.R @ two.D @ r_inv
    return PolarFactors(U=U, A=A)


def _signed_permutations(n):
    """Positively oriented signed permutation matrices (order 2**(n-1) n!)."""
    for perm in permutations(range(n)):
        base = np.zeros((n, n))
        for col, row in enumerate(perm):
            base[row, col] = 1.0
        for signs in product((1.0, -1.0), repeat=n - 1):
            w = base.copy()
            full = signs + (np.prod(signs) * np.linalg.det(base),)
            for col, s in enumerate(full):
                w[:, col] *= s
            yield w


def _multiplicity_pattern(q, tol):
    blocks = []
    size = 1
    for a in range(1, q.shape[0]):
        if abs(q[a] - q[a - 1]) < tol:
            size += 1
        else:
            blocks.append(size)
            size = 1
    blocks.append(size)
    return tuple(blocks)


def two_polar_decompose(config, metrics=None, hint=None, degeneracy_tol=1e-8):
    """Two-sided factorization phi = L D R^-1 with logarithmic stretches.

    Parameters
    ----------
    config : Configuration
    metrics : MetricPair, optional
    hint : TwoPolarFactors, optional
        Previous factors along a curve.  When given and the spectrum is
        simple, the discrete branch (signed permutation applied to both
        frames and to q) closest to the hint is selected instead of the
        canonical descending order.
    degeneracy_tol : float
        Two stretches closer than this (in q) set the ``degenerate`` flag.

    Returns
    -------
    TwoPolarFactors

    Notes
    -----
    For identity metrics this is the singular value decomposition with both
    orthogonal factors forced into the rotation group.  General metrics are
    handled in an orthonormal gauge: phi' = g^(1/2) phi eta^(-1/2) is
    decomposed and the frames are pulled back, leaving L g-orthonormal and
    R eta-orthonormal.
    """
    metrics = _metrics_or_identity(metrics, config.n)
    n = config.n
    if metrics.is_identity():
        phi_on = config.phi
        g_pull = eta_pull = None
    else:
        g_half, g_half_inv = _mat.spd_sqrt(metrics.g)
        eta_half, eta_half_inv = _mat.spd_sqrt(metrics.eta)
        phi_on = g_half @ config.phi @ eta_half_inv
        g_pull, eta_pull = g_half_inv, eta_half_inv

    u, s, vt = np.linalg.svd(phi_on)
    if np.linalg.det(u) < 0.0:
        # det phi > 0 forces det u = det v, so flip one column of each
        u = u.copy()
        vt = vt.copy()
        u[:, -1] *= -1.0
        vt[-1, :] *= -1.0
    if s[-1] <= 0.0:
        raise SingularConfiguration("vanishing stretch in two-polar factorization")
    q = np.log(s)
    L = u if g_pull is None else g_pull @ u
    R = vt.T if eta_pull is None else eta_pull @ vt.T

    # block pattern read off the canonical descending order
    pattern = _multiplicity_pattern(q, degeneracy_tol)
    degenerate = len(pattern) < n

    if hint is not None and not degenerate:
        best = None
        best_dist = np.inf
        for w in _signed_permutations(n):
            dist = (np.linalg.norm(L @ w - hint.L) ** 2
                    + np.linalg.norm(R @ w - hint.R) ** 2)
            if dist < best_dist:
                best_dist = dist
                best = w
        L = L @ best
        R = R @ best
        perm = np.argmax(np.abs(best), axis=0)
        q = q[perm]

    return TwoPolarFactors(L=L, q=q, R=R, degenerate=degenerate,
                           multiplicity=pattern)


# ---------------------------------------------------------------------------
# volume and momentum splittings
# ---------------------------------------------------------------------------

def volume_ratio(config, metrics=None):
    """Metric volume ratio delta, its log, linear scale, and mean stretch log.

    delta multiplies det phi by sqrt(det g / det eta); it is positive for any
    admissible configuration and multiplicative under composition with linear
    maps on either side.
    """
    metrics = _metrics_or_identity(metrics, config.n)
    n = config.n
    d = np.linalg.det(config.phi)
    scale = np.sqrt(np.linalg.det(metrics.g) / np.linalg.det(metrics.eta))
    delta = scale * d
    if delta <= 0.0:
        raise NegativeOrientation(f"volume ratio {delta:g} <= 0")
    log_delta = float(np.log(delta))
    return VolumeRatio(
        delta=float(delta),
        log_delta=log_delta,
        linear_scale=float(delta ** (1.0 / n)),
        q_mean=log_delta / n,
    )


def spin_vorticity(Sigma, Sigma_hat, metrics=None):
    """Spin and vorticity parts of the affine momentum maps.

    S doubles the g-skew part of the spatial momentum Sigma, V doubles the
    eta-skew part of the co-moving momentum Sigma_hat.  The reported norms
    use ||S||^2 = -Tr(S S)/2, which is nonnegative for metric-skew matrices.
    Away from rigid motion S is *not* the phi-conjugate of V.
    """
    Sigma = _mat.as_matrix(Sigma, name="Sigma")
    Sigma_hat = _mat.as_matrix(Sigma_hat, Sigma.shape[0], "Sigma_hat")
    metrics = _metrics_or_identity(metrics, Sigma.shape[0])
    S = Sigma - _mat.metric_transpose(Sigma, metrics.g)
    V = Sigma_hat - _mat.metric_transpose(Sigma_hat, metrics.eta)
    s2 = -0.5 * np.trace(S @ S)
    v2 = -0.5 * np.trace(V @ V)
    return SpinVorticity(
        S=S, V=V,
        spin_norm=float(np.sqrt(max(s2, 0.0))),
        vorticity_norm=float(np.sqrt(max(v2, 0.0))),
    )
