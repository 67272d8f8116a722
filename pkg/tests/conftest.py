"""Shared fixtures and random-matrix helpers for the test suite."""

import numpy as np
import pytest

from afftop._mat import spd_sqrt


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)


def random_phi(n, rng, spread=0.35):
    """Well-conditioned positively oriented matrix near the identity."""
    m = np.eye(n) + spread * rng.standard_normal((n, n))
    if np.linalg.det(m) <= 0.05:
        return random_phi(n, rng, spread)
    return m


def random_spd(n, rng, spread=0.25):
    a = np.eye(n) + spread * rng.standard_normal((n, n))
    return a @ a.T + 0.25 * np.eye(n)


def random_rotation(n, rng):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1.0
    return q


def random_metric_isometry(metric, rng):
    """Random A with A^T metric A = metric and det A = +1."""
    half, half_inv = spd_sqrt(metric)
    return half_inv @ random_rotation(metric.shape[0], rng) @ half


def skew(m):
    return 0.5 * (m - m.T)


def sym(m):
    return 0.5 * (m + m.T)
