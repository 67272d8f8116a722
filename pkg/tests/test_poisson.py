"""Bracket tables: exact algebra checks and canonical-realization oracles."""

from itertools import combinations

import numpy as np
import pytest

from afftop.kinematics import MetricPair, spin_vorticity
from afftop.poisson import (
    BracketTable,
    casimir_gradient,
    chain_bracket,
    evaluate_combination,
    gl_bracket_table,
    gl_generator_values,
    mn_bracket_table,
    mn_generator_values,
    spin_norm_gradient,
    verify_algebra,
    vorticity_norm_gradient,
)

from conftest import random_spd


# ---------------------------------------------------------------------------
# canonical oracle: realize the generators as quadratic functions on a flat
# phase space and take exact central-difference brackets (central differences
# are exact on quadratics, so this is machine-precision independent ground
# truth for every table entry)
# ---------------------------------------------------------------------------

class CanonicalOracle:
    def __init__(self, shapes, rng):
        # shapes: list of (name, shape) canonical (q, p) blocks; each block
        # contributes a conjugate pair of flattened coordinates
        self.blocks = []
        self.point = {}
        for name, shape in shapes:
            self.point[name] = rng.standard_normal(shape)
            self.point[name + "_mom"] = rng.standard_normal(shape)
            self.blocks.append((name, shape))

    def _grad(self, func, var):
        h = 1e-4
        base = self.point[var]
        grad = np.zeros(base.shape)
        it = np.nditer(base, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            save = base[idx]
            base[idx] = save + h
            fp = func(self.point)
            base[idx] = save - h
            fm = func(self.point)
            base[idx] = save
            grad[idx] = (fp - fm) / (2.0 * h)
        return grad

    def bracket(self, f, g):
        total = 0.0
        for name, shape in self.blocks:
            df_dq = self._grad(f, name)
            df_dp = self._grad(f, name + "_mom")
            dg_dq = self._grad(g, name)
            dg_dp = self._grad(g, name + "_mom")
            total += np.sum(df_dq * dg_dp) - np.sum(df_dp * dg_dq)
        return total


def gl_oracle(n, rng):
    # conjugate pairs: (phi[i, A], P[i, A]) and (x[i], p[i]); the momentum
    # matrix with material row index is P^A_i = P[i, A]
    oracle = CanonicalOracle([("phi", (n, n)), ("x", (n,))], rng)

    def sigma(i, j):
        return lambda z: float((z["phi"] @ z["phi_mom"].T)[i, j])

    def sigma_hat(a, b):
        return lambda z: float((z["phi_mom"].T @ z["phi"])[a, b])

    def lin_p(i):
        return lambda z: float(z["x_mom"][i])

    def lin_p_hat(a):
        return lambda z: float((z["phi"].T @ z["x_mom"])[a])

    def realize(label):
        if label[0] == "Sigma":
            return sigma(label[1], label[2])
        if label[0] == "Sigma_hat":
            return sigma_hat(label[1], label[2])
        if label[0] == "p":
            return lin_p(label[1])
        return lin_p_hat(label[1])

    def values(z):
        sig = z["phi"] @ z["phi_mom"].T
        sig_hat = z["phi_mom"].T @ z["phi"]
        return gl_generator_values(sig, sig_hat, z["x_mom"], z["phi"].T @ z["x_mom"])

    return oracle, realize, values


def mn_oracle(n, rng):
    oracle = CanonicalOracle([("L", (n, n)), ("R", (n, n))], rng)

    def rho(z):
        m = z["L_mom"].T @ z["L"]
        return m - m.T

    def tau(z):
        m = z["R_mom"].T @ z["R"]
        return m - m.T

    def realize(label):
        fam, a, b = label
        if fam == "M":
            return lambda z: float(-(rho(z) + tau(z))[a, b])
        return lambda z: float((rho(z) - tau(z))[a, b])

    def values(z):
        return mn_generator_values(-(rho(z) + tau(z)), rho(z) - tau(z))

    return oracle, realize, values


# independent Jacobi check through dense integer structure-constant tensors
def dense_jacobi_defect(table):
    gens = list(table.generators)
    index = {g: k for k, g in enumerate(gens)}
    m = len(gens)
    c = np.zeros((m, m, m), dtype=np.int64)
    defined = np.ones((m, m), dtype=bool)
    for i, a in enumerate(gens):
        for j, b in enumerate(gens):
            combo = table.bracket(a, b)
            if combo is None:
                defined[i, j] = False
                continue
            for lab, coeff in combo.items():
                c[i, j, index[lab]] = coeff
    defect = (np.einsum("jkm,iml->ijkl", c, c)
              + np.einsum("kim,jml->ijkl", c, c)
              + np.einsum("ijm,kml->ijkl", c, c))
    # mask triples that touch an undefined pair, directly or through results
    ok = np.ones((m, m, m), dtype=bool)
    for i in range(m):
        for j in range(m):
            if not defined[i, j]:
                ok[i, j, :] = ok[:, i, j] = ok[j, :, i] = False
                ok[j, i, :] = ok[:, j, i] = ok[i, :, j] = False
    # results of inner brackets must also pair with the outer generator
    for i, a in enumerate(gens):
        for j, b in enumerate(gens):
            combo = table.bracket(a, b) or {}
            for lab in combo:
                k = index[lab]
                bad = ~defined[:, k]
                ok[bad, i, j] = False
                ok[i, j, bad] = False
                ok[j, bad, i] = False
    return defect, ok


class TestTables:
    def test_gl_dimension_one_abelian(self):
        # the linear blocks are abelian at n = 1; only the affine-line
        # coupling of Sigma_hat with p_hat survives
        table = gl_bracket_table(1)
        linear = {pair: combo for pair, combo in table.table.items()
                  if not any(lab[0] == "p_hat" for lab in pair)}
        assert linear == {}
        assert table.bracket(("Sigma_hat", 0, 0), ("p_hat", 0)) == {("p_hat", 0): -1}
        assert len(table.undefined) == 1  # the (Sigma, p_hat) pair

    def test_mn_dimension_two_abelian(self):
        table = mn_bracket_table(2)
        assert table.table == {}
        assert len(table.generators) == 2

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_gl_algebra_passes(self, n):
        report = verify_algebra(gl_bracket_table(n))
        assert report.passed
        assert report.jacobi_skipped > 0  # Sigma-p_hat triples are skipped

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_mn_algebra_passes(self, n):
        report = verify_algebra(mn_bracket_table(n))
        assert report.passed
        assert report.jacobi_skipped == 0

    @pytest.mark.parametrize("builder", [gl_bracket_table, mn_bracket_table])
    def test_jacobi_dense_tensor_oracle(self, builder):
        table = builder(3)
        defect, ok = dense_jacobi_defect(table)
        assert np.all(defect[ok] == 0)

    def test_injected_fault_is_localized(self):
        table = gl_bracket_table(2)
        bad_pair = (("Sigma_hat", 0, 1), ("p_hat", 0))
        flipped = dict(table.table)
        flipped[bad_pair] = {lab: -c for lab, c in flipped[bad_pair].items()}
        report = verify_algebra(BracketTable(
            n=2, generators=table.generators, table=flipped,
            undefined=table.undefined))
        assert not report.passed
        touched = report.antisymmetry_failures + report.jacobi_failures
        flat = {lab for item in touched for lab in item}
        assert bad_pair[0] in flat or bad_pair[1] in flat


class TestCanonicalOracle:
    @pytest.mark.parametrize("n", [2, 3])
    def test_gl_table_matches_canonical_brackets(self, n, rng):
        table = gl_bracket_table(n)
        oracle, realize, values = gl_oracle(n, rng)
        vals = values(oracle.point)
        for a in table.generators:
            for b in table.generators:
                combo = table.bracket(a, b)
                if combo is None:
                    continue
                numeric = oracle.bracket(realize(a), realize(b))
                from_table = evaluate_combination(combo, vals)
                assert numeric == pytest.approx(from_table, abs=1e-7), (a, b)

    def test_gl_undefined_pair_value(self, rng):
        # {Sigma^i_j, p_hat_A} = -p_j phi^i_A, visibly outside the span
        n = 2
        oracle, realize, _ = gl_oracle(n, rng)
        z = oracle.point
        for i in range(n):
            for j in range(n):
                for a in range(n):
                    numeric = oracle.bracket(realize(("Sigma", i, j)),
                                             realize(("p_hat", a)))
                    expected = -z["x_mom"][j] * z["phi"][i, a]
                    assert numeric == pytest.approx(expected, abs=1e-7)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_mn_table_matches_canonical_brackets(self, n, rng):
        table = mn_bracket_table(n)
        oracle, realize, values = mn_oracle(n, rng)
        vals = values(oracle.point)
        for a in table.generators:
            for b in table.generators:
                numeric = oracle.bracket(realize(a), realize(b))
                from_table = evaluate_combination(table.bracket(a, b), vals)
                assert numeric == pytest.approx(from_table, abs=1e-7), (a, b)

    def test_rho_tau_commute(self, rng):
        # the two skew blocks come from independent canonical pairs
        oracle, realize, _ = mn_oracle(3, rng)

        def rho01(z):
            m = z["L_mom"].T @ z["L"]
            return float((m - m.T)[0, 1])

        def tau02(z):
            m = z["R_mom"].T @ z["R"]
            return float((m - m.T)[0, 2])

        assert oracle.bracket(rho01, tau02) == pytest.approx(0.0, abs=1e-8)


class TestChainRule:
    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_casimirs_commute_with_sigma(self, k, rng):
        n = 3
        table = gl_bracket_table(n)
        sigma = rng.standard_normal((n, n))
        sigma_hat = rng.standard_normal((n, n))
        p = rng.standard_normal(n)
        vals = gl_generator_values(sigma, sigma_hat, p, rng.standard_normal(n))
        grad = casimir_gradient(sigma, k)
        for i in range(n):
            for j in range(n):
                combo = chain_bracket(table, ("Sigma", i, j), grad)
                assert evaluate_combination(combo, vals) == pytest.approx(
                    0.0, abs=1e-10)

    def test_vorticity_norm_commutes_with_sigma(self, rng):
        n = 3
        table = gl_bracket_table(n)
        eta = random_spd(n, rng)
        sigma = rng.standard_normal((n, n))
        sigma_hat = rng.standard_normal((n, n))
        vals = gl_generator_values(sigma, sigma_hat,
                                   rng.standard_normal(n), rng.standard_normal(n))
        grad = vorticity_norm_gradient(sigma_hat, eta)
        for i in range(n):
            for j in range(n):
                combo = chain_bracket(table, ("Sigma", i, j), grad)
                assert evaluate_combination(combo, vals) == pytest.approx(
                    0.0, abs=1e-10)

    def test_spin_norm_commutes_with_sigma_hat(self, rng):
        n = 3
        table = gl_bracket_table(n)
        g = random_spd(n, rng)
        sigma = rng.standard_normal((n, n))
        sigma_hat = rng.standard_normal((n, n))
        vals = gl_generator_values(sigma, sigma_hat,
                                   rng.standard_normal(n), rng.standard_normal(n))
        grad = spin_norm_gradient(sigma, g)
        for a in range(n):
            for b in range(n):
                combo = chain_bracket(table, ("Sigma_hat", a, b), grad)
                assert evaluate_combination(combo, vals) == pytest.approx(
                    0.0, abs=1e-10)

    def test_gradients_match_finite_differences(self, rng):
        n = 3
        sigma_hat = rng.standard_normal((n, n))
        eta = random_spd(n, rng)
        grad = vorticity_norm_gradient(sigma_hat, eta)

        def norm_sq(s):
            sv = spin_vorticity(np.zeros((n, n)), s, MetricPair(np.eye(n), eta))
            return sv.vorticity_norm ** 2

        h = 1e-6
        for a in range(n):
            for b in range(n):
                bump = np.zeros((n, n))
                bump[a, b] = h
                fd = (norm_sq(sigma_hat + bump) - norm_sq(sigma_hat - bump)) / (2 * h)
                assert grad[("Sigma_hat", a, b)] == pytest.approx(fd, abs=1e-8)

    def test_casimir_gradient_matches_finite_differences(self, rng):
        n = 3
        sigma = rng.standard_normal((n, n))
        grad = casimir_gradient(sigma, 3)
        h = 1e-5
        for a in range(n):
            for b in range(n):
                bump = np.zeros((n, n))
                bump[a, b] = h
                fd = (np.trace(np.linalg.matrix_power(sigma + bump, 3))
                      - np.trace(np.linalg.matrix_power(sigma - bump, 3))) / (2 * h)
                assert grad[("Sigma", a, b)] == pytest.approx(fd, abs=1e-6)
