"""Small dense-matrix helpers used across the package."""

import numpy as np

from .errors import NonPositiveMetric, SingularConfiguration

_EYE_CACHE = {}


def eye(n):
    if n not in _EYE_CACHE:
        _EYE_CACHE[n] = np.eye(n)
        _EYE_CACHE[n].setflags(write=False)
    return _EYE_CACHE[n]


def as_matrix(a, n=None, name="matrix"):
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if n is not None and m.shape[0] != n:
        raise ValueError(f"{name} must be {n}x{n}, got {m.shape[0]}x{m.shape[1]}")
    return m


def as_vector(a, n=None, name="vector"):
    v = np.asarray(a, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise ValueError(f"{name} must have length {n}, got {v.shape[0]}")
    return v


def check_spd(m, name="metric"):
    """Validate symmetric positive-definiteness; return the symmetrized matrix."""
    m = as_matrix(m, name=name)
    if not np.allclose(m, m.T, rtol=1e-12, atol=1e-12):
        raise NonPositiveMetric(f"{name} is not symmetric")
    w = np.linalg.eigvalsh(0.5 * (m + m.T))
    if w[0] <= 0.0:
        raise NonPositiveMetric(f"{name} has non-positive eigenvalue {w[0]:g}")
    return 0.5 * (m + m.T)


def spd_sqrt(m):
    """Symmetric square root and its inverse for an SPD matrix."""
    w, v = np.linalg.eigh(m)
    if w[0] <= 0.0:
        raise NonPositiveMetric(f"matrix has non-positive eigenvalue {w[0]:g}")
    s = np.sqrt(w)
    root = (v * s) @ v.T
    root_inv = (v / s) @ v.T
    return root, root_inv


def inv(m, name="matrix"):
    try:
        return np.linalg.inv(m)
    except np.linalg.LinAlgError as exc:
        raise SingularConfiguration(f"{name} is singular") from exc


def sym(m):
    return 0.5 * (m + m.T)


def skew(m):
    return 0.5 * (m - m.T)


def deviator(m):
    n = m.shape[0]
    return m - (np.trace(m) / n) * eye(n)


def frob(m):
    return float(np.linalg.norm(m))


def metric_transpose(f, metric):
    """Transpose of a mixed tensor taken with respect to a metric.

    Returns metric^-1 . f^T . metric, the matrix of the metric-adjoint
    endomorphism; with the identity metric this is the plain transpose.
    """
    metric = as_matrix(metric, f.shape[0], "metric")
    return np.linalg.solve(metric, f.T @ metric)


def outer(a, b):
    return np.outer(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
