"""Randomized verification of the commutator identities behind the deformation
step: the anti-derivation law for L_a, its evaluation formula, the bracket
identity [L_a, rho_hat_b] = i_{N(a,b)} - L_{ab}, the closed-square identity
d rho_a rho_a Phi = -G(a,a) Phi with E^2 membership, and E^2 membership of the
commutator powers Ad^m_{rho_a} G(a,a) Phi^0.

Each check reports its worst relative residual over the requested trials; the
suite is deterministic given the seed.
"""

from __future__ import annotations

import itertools

import numpy as np

from .exterior import Form, FormTuple
from .fields import (
    FourierField,
    HodgePackage,
    d,
    interior_field,
    interior_two_tangent,
    L_a,
    lie_derivative_vector,
    matmul_fields,
    nijenhuis,
    rho_hat_field,
    wedge_fields,
)
from .models import CalibrationModel, build_model, rho_generator_matrix, tuple_wedge_matrix


def _rand_form_field(rng, n, degree, n_modes=1, kmax=2) -> FourierField:
    f = FourierField(n, "form", None, 64, {"degree": degree})
    for _ in range(n_modes):
        k = tuple(int(x) for x in rng.integers(-kmax, kmax + 1, size=n))
        coeffs = {ix: complex(rng.normal(), rng.normal())
                  for ix in itertools.combinations(range(1, n + 1), degree)}
        f = f + FourierField.single(n, "form", k, Form(n, degree, coeffs),
                                    meta={"degree": degree})
    return f


def _rand_endo_field(rng, n, n_modes=1, kmax=2) -> FourierField:
    a = FourierField(n, "endo", None, 64)
    for _ in range(n_modes):
        k = tuple(int(x) for x in rng.integers(-kmax, kmax + 1, size=n))
        a = a + FourierField.single(n, "endo", k,
                                    rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return a


def _closed_endo_field(model: CalibrationModel, rng, kmax=1) -> FourierField:
    """Random a with d rho_hat_a Phi^0 = 0: a per-mode nullspace sample."""
    n = model.dim
    while True:
        k = tuple(int(x) for x in rng.integers(-kmax, kmax + 1, size=n))
        if any(k):
            break
    A = tuple_wedge_matrix(model, np.array(k, dtype=float), 1) @ rho_generator_matrix(model)
    _, s, vh = np.linalg.svd(A)
    r = int(np.sum(s > 1e-9 * s[0]))
    null = vh.T[:, r:]
    xi = (null @ (rng.normal(size=null.shape[1]) + 1j * rng.normal(size=null.shape[1])))
    return FourierField.real_single(n, "endo", k, xi.reshape(n, n))


def _rel(num: float, den: float) -> float:
    return num / max(den, 1e-300)


def check_anti_derivation(rng, n=3) -> float:
    """Lemma: L_a(f ^ g) = L_a f ^ g + (-1)^{|f|} f ^ L_a g."""
    a = _rand_endo_field(rng, n)
    p = int(rng.integers(1, n))
    f = _rand_form_field(rng, n, p)
    g = _rand_form_field(rng, n, 1)
    lhs = L_a(a, wedge_fields(f, g))
    rhs = wedge_fields(L_a(a, f), g) + wedge_fields(f, L_a(a, g)) * ((-1.0) ** p)
    return _rel((lhs - rhs).l2_norm(), lhs.l2_norm() + rhs.l2_norm())


def check_evaluation_formula(rng, n=3) -> float:
    """Lemma: (L_a eta)(u_0..u_p) = sum_m (-1)^m (L_{a u_m} eta)(u_0..^m..u_p)
    on the constant coordinate frames (whose brackets vanish)."""
    a = _rand_endo_field(rng, n)
    p = int(rng.integers(1, n))
    eta = _rand_form_field(rng, n, p)
    lhs = L_a(a, eta)
    # oracle: assemble the (p+1)-form field from ordinary Lie derivatives along
    # the vector fields a(e_m), via the Cartan formula
    lie: list[FourierField] = []
    for m in range(n):
        vf = FourierField(n, "vector", None, 64)
        for k in a.sorted_modes():
            col = a.modes[k][:, m]
            if np.linalg.norm(col):
                vf.modes[k] = col.copy()
        lie.append(lie_derivative_vector(vf, eta))
    oracle = lhs.zero_like()
    for target in itertools.combinations(range(1, n + 1), p + 1):
        for pos, axis in enumerate(target):
            rest = tuple(j for j in target if j != axis)
            src = lie[axis - 1]
            sign = (-1.0) ** pos
            for k in src.sorted_modes():
                c = src.modes[k].coeff(rest)
                if c == 0:
                    continue
                add = FourierField.single(n, "form", k, Form(n, p + 1, {target: sign * c}),
                                          meta={"degree": p + 1})
                oracle = oracle + add
    return _rel((lhs - oracle).l2_norm(), lhs.l2_norm() + oracle.l2_norm())


def check_bracket_identity(rng, n=3) -> tuple[float, float, float]:
    """Lemma: [L_a, rho_hat_b] = i_{N(a,b)} - L_{ab} on a random test form.

    Returns (relative residual, |lhs|, |rhs|)."""
    a = _rand_endo_field(rng, n)
    b = _rand_endo_field(rng, n)
    p = int(rng.integers(1, n))
    f = _rand_form_field(rng, n, p)
    lhs = L_a(a, rho_hat_field(b, f)) - rho_hat_field(b, L_a(a, f))
    rhs = interior_two_tangent(nijenhuis(a, b), f) - L_a(matmul_fields(a, b), f)
    return (_rel((lhs - rhs).l2_norm(), lhs.l2_norm() + rhs.l2_norm()),
            lhs.l2_norm(), rhs.l2_norm())


def check_closed_square(model: CalibrationModel, pkg: HodgePackage, rng) -> float:
    """For d Phi = 0 and d rho_hat_a Phi = 0: d rho_a rho_a Phi = -G(a,a) Phi,
    and the result is E^2-valued."""
    a = _closed_endo_field(model, rng)
    phi = FourierField.constant(model.dim, "tuple", model.Phi0, 64,
                                {"signature": model.signature})
    lhs = d(rho_hat_field(a, rho_hat_field(a, phi)))
    gaa = interior_two_tangent(nijenhuis(a, a), phi) - L_a(matmul_fields(a, a), phi)
    ident = _rel((lhs + gaa).l2_norm(), lhs.l2_norm() + gaa.l2_norm())
    _, member = pkg.to_coords(lhs, 2)
    return max(ident, member)


def check_ad_powers(model: CalibrationModel, pkg: HodgePackage, rng, k_max=3) -> float:
    """Ad^m_{rho_a} G(a,a) Phi^0 stays in Gamma(E^2) for m <= k_max (any a)."""
    a = _rand_endo_field(rng, model.dim, n_modes=1, kmax=1)
    phi = FourierField.constant(model.dim, "tuple", model.Phi0, 64,
                                {"signature": model.signature})
    naa = nijenhuis(a, a)
    a2 = matmul_fields(a, a)

    def g_op(f):
        return interior_two_tangent(naa, f) - L_a(a2, f)

    def ad(m, f):
        if m == 0:
            return g_op(f)
        return rho_hat_field(a, ad(m - 1, f)) - ad(m - 1, rho_hat_field(a, f))

    worst = 0.0
    for m in range(k_max + 1):
        val = ad(m, phi)
        _, member = pkg.to_coords(val, 2)
        worst = max(worst, member)
    return worst


def identity_suite(trials: int = 100, seed: int = 0,
                   membership_model: str = "g2") -> dict:
    """Run every identity `trials` times; returns {name: max relative residual}."""
    rng = np.random.default_rng(seed)
    model = build_model(membership_model)
    pkg = HodgePackage(model)
    out = {
        "L_a_anti_derivation": 0.0,
        "L_a_evaluation_formula": 0.0,
        "bracket_nijenhuis": 0.0,
        "bracket_lhs_norm": 0.0,
        "bracket_rhs_norm": 0.0,
        "closed_square_E2": 0.0,
        "ad_powers_E2": 0.0,
    }
    for _ in range(trials):
        out["L_a_anti_derivation"] = max(out["L_a_anti_derivation"],
                                         check_anti_derivation(rng))
        out["L_a_evaluation_formula"] = max(out["L_a_evaluation_formula"],
                                            check_evaluation_formula(rng))
        res, lhs_n, rhs_n = check_bracket_identity(rng)
        out["bracket_nijenhuis"] = max(out["bracket_nijenhuis"], res)
        out["bracket_lhs_norm"] = max(out["bracket_lhs_norm"], lhs_n)
        out["bracket_rhs_norm"] = max(out["bracket_rhs_norm"], rhs_n)
        out["closed_square_E2"] = max(out["closed_square_E2"],
                                      check_closed_square(model, pkg, rng))
        out["ad_powers_E2"] = max(out["ad_powers_E2"],
                                  check_ad_powers(model, pkg, rng))
    return out
