"""Structure-constant Poisson brackets for the affine and reduced variables.

Two families of generators are covered: the phase-space momentum maps
(Sigma, Sigma_hat, p, p_hat) closing on the linear-group structure
constants, and the reduced skew pairs (M, N) closing on a doubled
orthogonal algebra.  Brackets are stored as sparse integer tables and
evaluated by contraction; exactness is then free, and the verification
utilities can check antisymmetry and Jacobi in integer arithmetic.

Generator labels are tuples: ("Sigma", i, j), ("Sigma_hat", A, B),
("p", i), ("p_hat", A), ("M", a, b), ("N", a, b) with a < b for the skew
families.  The bracket of ("Sigma", i, j) with ("p_hat", A) lands outside
the span of the generators, so the table records that pair as undefined
and algebra checks skip triples that would need it.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import _mat

__all__ = [
    "BracketTable",
    "AlgebraReport",
    "gl_bracket_table",
    "mn_bracket_table",
    "verify_algebra",
    "chain_bracket",
    "evaluate_combination",
    "gl_generator_values",
    "mn_generator_values",
    "casimir_gradient",
    "vorticity_norm_gradient",
    "spin_norm_gradient",
]


@dataclass(frozen=True)
class BracketTable:
    """Sparse integer bracket table over a fixed generator set.

    ``table`` maps ordered label pairs to {label: integer coefficient};
    absent pairs of known generators have zero bracket.  ``undefined``
    holds unordered pairs whose bracket leaves the generator span.
    """

    n: int
    generators: tuple
    table: dict
    undefined: frozenset = frozenset()

    def bracket(self, a, b):
        """{a, b} as a sparse integer combination; None when undefined."""
        if frozenset((a, b)) in self.undefined:
            return None
        return self.table.get((a, b), {})


@dataclass(frozen=True)
class AlgebraReport:
    antisymmetry_failures: tuple
    jacobi_failures: tuple
    closure_failures: tuple
    jacobi_skipped: int

    @property
    def passed(self):
        return not (self.antisymmetry_failures or self.jacobi_failures
                    or self.closure_failures)


# ---------------------------------------------------------------------------
# table construction
# ---------------------------------------------------------------------------

def _add(out, label, coeff):
    if coeff:
        new = out.get(label, 0) + coeff
        if new:
            out[label] = new
        else:
            del out[label]


def _fold_skew(out, family, a, b, coeff):
    # canonicalize skew-pair indices to a < b
    if a == b:
        return
    if a < b:
        _add(out, (family, a, b), coeff)
    else:
        _add(out, (family, b, a), -coeff)


def _gl_pair(a, b, n):
    """Bracket of two gl-family generators; None when outside the span."""
    fa, fb = a[0], b[0]
    out = {}
    if fa == "Sigma" and fb == "Sigma":
        i, j = a[1], a[2]
        k, l = b[1], b[2]
        # {Sigma^i_j, Sigma^k_l} = d^i_l Sigma^k_j - d^k_j Sigma^i_l
        if i == l:
            _add(out, ("Sigma", k, j), 1)
        if k == j:
            _add(out, ("Sigma", i, l), -1)
        return out
    if fa == "Sigma_hat" and fb == "Sigma_hat":
        A, B = a[1], a[2]
        C, D = b[1], b[2]
        # reversed structure: {S^A_B, S^C_D} = d^C_B S^A_D - d^A_D S^C_B
        if C == B:
            _add(out, ("Sigma_hat", A, D), 1)
        if A == D:
            _add(out, ("Sigma_hat", C, B), -1)
        return out
    if fa == "Sigma_hat" and fb == "p_hat":
        A, B = a[1], a[2]
        C = b[1]
        if A == C:
            _add(out, ("p_hat", B), -1)
        return out
    if fa == "p_hat" and fb == "Sigma_hat":
        C = a[1]
        A, B = b[1], b[2]
        if A == C:
            _add(out, ("p_hat", B), 1)
        return out
    if {fa, fb} == {"Sigma", "p_hat"}:
        return None  # lands on p x phi terms outside the generator span
    # every other pair commutes: {Sigma, Sigma_hat}, {Sigma, p},
    # {Sigma_hat, p}, {p, p}, {p_hat, p_hat}, {p, p_hat}
    return out


def gl_bracket_table(n):
    """Bracket table for Sigma, Sigma_hat, p, p_hat at dimension n."""
    gens = ([("Sigma", i, j) for i in range(n) for j in range(n)]
            + [("Sigma_hat", i, j) for i in range(n) for j in range(n)]
            + [("p", i) for i in range(n)]
            + [("p_hat", i) for i in range(n)])
    table = {}
    undefined = set()
    for a in gens:
        for b in gens:
            val = _gl_pair(a, b, n)
            if val is None:
                undefined.add(frozenset((a, b)))
            elif val:
                table[(a, b)] = val
    return BracketTable(n=n, generators=tuple(gens), table=table,
                        undefined=frozenset(undefined))


def _psi(out, family, x_sign, a, b, c, d):
    # Psi(X; abcd) = X_ad d_cb - X_cb d_ad + X_db d_ac - X_ac d_db,
    # folded onto a < b generators with overall sign x_sign
    if c == b:
        _fold_skew(out, family, a, d, x_sign)
    if a == d:
        _fold_skew(out, family, c, b, -x_sign)
    if a == c:
        _fold_skew(out, family, d, b, x_sign)
    if d == b:
        _fold_skew(out, family, a, c, -x_sign)


def _mn_pair(lab1, lab2):
    f1, a, b = lab1
    f2, c, d = lab2
    out = {}
    # {M, M} = {N, N} = -Psi(M); {M, N} = {N, M} = -Psi(N)
    target = "M" if f1 == f2 else "N"
    _psi(out, target, -1, a, b, c, d)
    return out


def mn_bracket_table(n):
    """Bracket table for the reduced skew pair (M, N) at dimension n.

    Both families close on the same doubled orthogonal structure: same-family
    brackets land in M, mixed brackets land in N.
    """
    gens = ([("M", a, b) for a, b in combinations(range(n), 2)]
            + [("N", a, b) for a, b in combinations(range(n), 2)])
    table = {}
    for l1 in gens:
        for l2 in gens:
            val = _mn_pair(l1, l2)
            if val:
                table[(l1, l2)] = val
    return BracketTable(n=n, generators=tuple(gens), table=table)


# ---------------------------------------------------------------------------
# algebra verification (exact integer arithmetic)
# ---------------------------------------------------------------------------

def _combo_add(acc, combo, scale):
    for lab, c in combo.items():
        new = acc.get(lab, 0) + scale * c
        if new:
            acc[lab] = new
        else:
            del acc[lab]


def _jacobi_defect(tab, a, b, c):
    """{a,{b,c}} + {b,{c,a}} + {c,{a,b}} or None if any pair is undefined."""
    acc = {}
    for x, y, z in ((a, b, c), (b, c, a), (c, a, b)):
        inner = tab.bracket(y, z)
        if inner is None:
            return None
        for lab, coeff in inner.items():
            outer = tab.bracket(x, lab)
            if outer is None:
                return None
            _combo_add(acc, outer, coeff)
    return acc


def verify_algebra(table):
    """Exact antisymmetry, Jacobi, and closure checks for a bracket table."""
    gens = set(table.generators)
    closure_failures = []
    for pair, combo in table.table.items():
        for lab in combo:
            if lab not in gens:
                closure_failures.append((pair, lab))

    antisymmetry_failures = []
    seen = set()
    for (a, b) in table.table:
        key = frozenset((a, b)) if a != b else (a, b)
        if key in seen:
            continue
        seen.add(key)
        forward = table.bracket(a, b)
        backward = table.bracket(b, a)
        if a == b:
            if forward:
                antisymmetry_failures.append((a, b))
            continue
        if backward is None or forward is None:
            antisymmetry_failures.append((a, b))
            continue
        mismatch = dict(forward)
        _combo_add(mismatch, backward, 1)
        if mismatch:
            antisymmetry_failures.append((a, b))

    jacobi_failures = []
    skipped = 0
    for a, b, c in combinations(table.generators, 3):
        defect = _jacobi_defect(table, a, b, c)
        if defect is None:
            skipped += 1
        elif defect:
            jacobi_failures.append((a, b, c))

    return AlgebraReport(
        antisymmetry_failures=tuple(antisymmetry_failures),
        jacobi_failures=tuple(jacobi_failures),
        closure_failures=tuple(closure_failures),
        jacobi_skipped=skipped,
    )


# ---------------------------------------------------------------------------
# chain-rule contraction
# ---------------------------------------------------------------------------

def chain_bracket(table, gen, gradient):
    """{gen, H} for H a function of the generators.

    ``gradient`` maps labels to dH/dG values; the result is the chain-rule
    contraction sum_p dH/dG_p {gen, G_p} as a label -> float combination.
    """
    out = {}
    for lab, gval in gradient.items():
        combo = table.bracket(gen, lab)
        if combo is None:
            raise KeyError(f"bracket of {gen} with {lab} is undefined")
        for m, coeff in combo.items():
            out[m] = out.get(m, 0.0) + coeff * gval
    return out


def evaluate_combination(combo, values):
    """Numeric value of a sparse label combination."""
    return float(sum(coeff * values[lab] for lab, coeff in combo.items()))


def gl_generator_values(Sigma, Sigma_hat, p, p_hat):
    """Label -> value map for the gl-family generators."""
    n = Sigma.shape[0]
    vals = {}
    for i in range(n):
        vals[("p", i)] = float(p[i])
        vals[("p_hat", i)] = float(p_hat[i])
        for j in range(n):
            vals[("Sigma", i, j)] = float(Sigma[i, j])
            vals[("Sigma_hat", i, j)] = float(Sigma_hat[i, j])
    return vals


def mn_generator_values(M, N):
    """Label -> value map for the reduced skew generators (a < b)."""
    n = M.shape[0]
    vals = {}
    for a, b in combinations(range(n), 2):
        vals[("M", a, b)] = float(M[a, b])
        vals[("N", a, b)] = float(N[a, b])
    return vals


# ---------------------------------------------------------------------------
# analytic gradients of the standard invariants
# ---------------------------------------------------------------------------

def casimir_gradient(Sigma, k, family="Sigma"):
    """Gradient of Tr(Sigma^k): d/dSigma^p_q = k (Sigma^(k-1))^q_p."""
    power = np.linalg.matrix_power(Sigma, k - 1)
    n = Sigma.shape[0]
    return {(family, p, q): float(k * power[q, p])
            for p in range(n) for q in range(n)}


def vorticity_norm_gradient(Sigma_hat, eta):
    """Gradient of ||V||^2 in Sigma_hat, valid for any SPD eta."""
    v = Sigma_hat - _mat.metric_transpose(Sigma_hat, eta)
    n = Sigma_hat.shape[0]
    return {("Sigma_hat", a, b): float(-2.0 * v[b, a])
            for a in range(n) for b in range(n)}


def spin_norm_gradient(Sigma, g):
    """Gradient of ||S||^2 in Sigma, valid for any SPD g."""
    s = Sigma - _mat.metric_transpose(Sigma, g)
    n = Sigma.shape[0]
    return {("Sigma", a, b): float(-2.0 * s[b, a])
            for a in range(n) for b in range(n)}
