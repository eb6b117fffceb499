"""Model construction, E-spaces, certificates and irreducible decompositions."""

import itertools
import math

import numpy as np
import pytest

from caldef.exterior import Endo, Form, FormTuple, form_inner, interior, rho_hat, wedge
from caldef.models import (
    E_space,
    RankUnstableError,
    Subspace,
    build_model,
    certify_ellipticity,
    check_model,
    cy_constant,
    cy_primitive_11_dim,
    cy_tangent_split,
    expected_cohomology,
    flatten_real,
    g2_decompose,
    g2_five_form_14,
    g2_J,
    g2_spaces,
    hk_invariant_two_forms,
    isotropy_algebra,
    numerical_rank,
    spin7_decompose,
    spin7_spaces,
)


# -- construction -----------------------------------------------------------------


def test_symplectic_model_n2(models):
    om = models["symplectic"].Phi0.parts[0]
    assert dict(om.items()) == {(1, 2): 1.0 + 0j, (3, 4): 1.0 + 0j}
    assert wedge(om, om).norm() > 0


def test_cy_constant_value():
    # substitute n=3 into the defining constant and compare against the
    # coordinate expansion of Omega ^ conj(Omega) = c_3 omega^3
    assert cy_constant(3) == pytest.approx((-1) ** 3 * 2 ** 3 / (1j ** 3 * math.factorial(3)))
    cy = build_model("cy", n=3)
    Om, om = cy.complex_omega(), cy.symplectic_part()
    lhs = wedge(Om, Om.conjugate())
    rhs = cy_constant(3) * wedge(wedge(om, om), om)
    assert (lhs - rhs).norm() <= 1e-14


def test_g2_three_form_coefficients(models):
    phi = models["g2"].Phi0.parts[0]
    coeffs = dict(phi.items())
    assert len(coeffs) == 7
    assert all(c.imag == 0 and abs(c.real) == 1.0 for c in coeffs.values())


def test_build_model_rejects_bad_input():
    with pytest.raises(ValueError):
        build_model("nonsense")
    with pytest.raises(ValueError):
        build_model("cy", n=0)


def test_model_signatures(models):
    assert models["symplectic"].signature == (2,)
    assert models["slnc"].signature == (3, 3)
    assert models["cy"].signature == (3, 3, 2)
    assert models["hk"].signature == (2, 2, 2)
    assert models["g2"].signature == (3, 4)
    assert models["spin7"].signature == (4,)


# -- structure-equation checks ------------------------------------------------------


def test_check_model_flat_cy(models):
    residuals = dict(check_model(models["cy"]))
    assert all(v < 1e-12 for v in residuals.values())


def test_slnc_kernel_scale_invariance(models):
    # doubling Omega keeps dim Ker = n (the C*-fiber over complex structures)
    sl = models["slnc"]
    doubled = build_model("slnc", n=3)
    doubled.Phi0 = FormTuple([p * 2.0 for p in sl.Phi0.parts])
    res = dict(check_model(doubled))
    assert res["kernel_dim"] == 0.0 and res["transversality"] == 0.0


def test_check_model_degenerate(models):
    res = dict(check_model(models["degenerate-symplectic"]))
    assert res["monge_ampere"] >= 1.0
    assert res["positive_definite"] >= 1.0


def test_check_model_others(models):
    for kind in ("symplectic", "hk", "g2", "spin7"):
        assert all(v < 1e-12 for _, v in check_model(models[kind]))


# -- E-spaces and isotropy -----------------------------------------------------------


E1_EXPECTED = {"symplectic": 6, "slnc": 20, "cy": 28, "hk": 13, "g2": 35, "spin7": 43}
ISO_EXPECTED = {"symplectic": 10, "slnc": 16, "cy": 8, "hk": 3, "g2": 14, "spin7": 21}


@pytest.mark.parametrize("kind", list(E1_EXPECTED))
def test_e1_and_isotropy_ranks(models, kind):
    model = models[kind]
    assert E_space(model, 1).rank == E1_EXPECTED[kind]
    assert isotropy_algebra(model).rank == ISO_EXPECTED[kind]
    # orbit dimension identity: rank E^1 = dim gl(n) - dim isotropy
    assert E_space(model, 1).rank == model.dim ** 2 - isotropy_algebra(model).rank


def test_hk_dimension_formulas():
    for m in (1, 2):
        model = build_model("hk", m=m)
        assert E_space(model, 1).rank == 14 * m * m - m
        assert hk_invariant_two_forms(model).rank == 2 * m * m + m
        assert isotropy_algebra(model).rank == m * (2 * m + 1)


def test_spin7_e1_is_1_7_35(models):
    assert E_space(models["spin7"], 1).rank == 43 == 1 + 7 + 35


def test_g2_e2_exact_sequence_rank(models):
    # 0 -> Lambda^5_14 -> E^2 -> Lambda^4 -> 0
    g2 = models["g2"]
    assert E_space(g2, 2).rank == 49 == 35 + 14
    assert g2_five_form_14(g2).rank == 14


def test_e_space_span_representation_independent(models):
    # generators rho_hat_{E_ij} Phi^0 and beta ^ i_v Phi^0 span the same E^1
    g2 = models["g2"]
    n = 7
    cols = [flatten_real(rho_hat(Endo.unit(n, r, c), g2.Phi0))
            for r in range(1, n + 1) for c in range(1, n + 1)]
    other = Subspace.from_generators(np.column_stack(cols))
    assert other.mutual_residual(E_space(g2, 1)) < 1e-9


def test_rank_cutoff_stability_raises_when_ambiguous():
    s = np.array([1.0, 3e-9, 1e-12])  # a singular value sitting inside the x10 window
    with pytest.raises(RankUnstableError):
        numerical_rank(s)


def test_e0_spanned_by_contractions(models):
    cy = models["cy"]
    v = np.array([0.3, -1.2, 0.0, 0.7, 2.0, -0.5])
    vec = flatten_real(interior(v, cy.Phi0))
    assert E_space(cy, 0).residual(vec) < 1e-12


# -- ellipticity certificates --------------------------------------------------------


@pytest.mark.parametrize("kind", ["symplectic", "slnc", "cy", "hk", "g2", "spin7"])
def test_certify_elliptic_models(models, kind):
    cert = certify_ellipticity(models[kind], trials=25, seed=3)
    assert cert.verdict and cert.max_defect < 1e-8


def test_certify_degenerate_fails_at_stage_one(models):
    cert = certify_ellipticity(models["degenerate-symplectic"], trials=25, seed=3,
                               stages=(1,))
    assert not cert.verdict
    assert cert.max_defect > 1e-2
    assert cert.stage_defects[1] > 1e-2


def test_certificate_deterministic(models):
    c1 = certify_ellipticity(models["cy"], trials=10, seed=7)
    c2 = certify_ellipticity(models["cy"], trials=10, seed=7)
    assert c1.max_defect == c2.max_defect


# -- G2 decomposition -----------------------------------------------------------------


def test_g2_component_dimensions(models):
    sp = g2_spaces(models["g2"])
    assert {k: v.rank for k, v in sp.items()} == {
        "2_7": 7, "2_14": 14, "3_1": 1, "3_7": 7, "3_27": 27}


def test_g2_projectors_orthogonal_resolution(models, rng):
    g2 = models["g2"]
    for degree, labels in ((2, ("7", "14")), (3, ("1", "7", "27"))):
        coeffs = {ix: complex(rng.normal(), rng.normal())
                  for ix in itertools.combinations(range(1, 8), degree)}
        a = Form(7, degree, coeffs)
        parts = g2_decompose(g2, a)
        back = None
        for lab in labels:
            back = parts[lab] if back is None else back + parts[lab]
        assert (back - a).norm() <= 1e-10 * a.norm()
        for la, lb in itertools.combinations(labels, 2):
            assert abs(form_inner(parts[la], parts[lb])) <= 1e-10 * max(1.0, a.norm() ** 2)


def test_g2_phi_is_pure_type_one(models):
    g2 = models["g2"]
    parts = g2_decompose(g2, g2.Phi0.parts[0])
    assert (parts["1"] - g2.Phi0.parts[0]).norm() < 1e-12
    assert parts["7"].norm() < 1e-12 and parts["27"].norm() < 1e-12


def test_g2_contraction_lands_in_seven(models):
    g2 = models["g2"]
    got = g2_decompose(g2, interior(np.eye(7)[0], g2.Phi0.parts[0]))
    assert got["14"].norm() < 1e-12


def test_g2_lambda2_14_characterizations(models):
    # gamma ^ psi = 0 and *gamma = -gamma ^ phi on the 14-dimensional piece
    g2 = models["g2"]
    sp = g2_spaces(g2)
    phi, psi = g2.Phi0.parts
    for j in range(sp["2_14"].rank):
        gam = Form.from_vec(7, 2, sp["2_14"].onb[:, j])
        assert wedge(gam, psi).norm() < 1e-12
        assert (g2.star(gam) + wedge(gam, phi)).norm() < 1e-12


def test_g2_J_eigen_action(models, rng):
    g2 = models["g2"]
    phi, psi = g2.Phi0.parts
    assert (g2_J(g2, phi) - psi * (4.0 / 3.0)).norm() < 1e-12
    # on the 7 and 27 pieces J acts as +* and -*
    coeffs = {ix: complex(rng.normal()) for ix in itertools.combinations(range(1, 8), 3)}
    a = Form(7, 3, coeffs)
    parts = g2_decompose(g2, a)
    assert (g2_J(g2, parts["7"]) - g2.star(parts["7"])).norm() <= 1e-11 * max(1.0, a.norm())
    assert (g2_J(g2, parts["27"]) + g2.star(parts["27"])).norm() <= 1e-11 * max(1.0, a.norm())


def test_g2_lemma_6_4_identity(models, rng):
    # u ^ J(u ^ eta) = -2 |u|^2 (*gamma) with gamma in Lambda^2_14 and i_v gamma = 0
    g2 = models["g2"]
    sp = g2_spaces(g2)
    worst = 0.0
    for _ in range(100):
        u = rng.normal(size=7)
        eta = Form(7, 2, {ix: complex(rng.normal())
                          for ix in itertools.combinations(range(1, 8), 2)})
        uf = Form(7, 1, {(i + 1,): u[i] for i in range(7)})
        lhs = wedge(uf, g2_J(g2, wedge(uf, eta)))
        # gamma per the construction: contract v into the component of u ^ eta
        # orthogonal to u ^ Lambda^2_7
        u_eta = wedge(uf, eta)
        gens = [flatten_real(FormTuple([wedge(uf, Form.from_vec(7, 2, sp["2_7"].onb[:, j]))]))
                for j in range(7)]
        u_l27 = Subspace.from_generators(np.column_stack(gens))
        vec = u_eta.vec().real
        r = Form.from_vec(7, 3, vec - u_l27.project(vec))
        nu2 = float(u @ u)
        gam = interior(u, r) * (1.0 / (2.0 * nu2))
        # gamma lies in the 14-piece and is annihilated by v
        assert sp["2_14"].residual(gam.vec().real) < 1e-9
        assert interior(u, gam).norm() <= 1e-10 * max(1.0, gam.norm())
        rhs = g2.star(gam) * (-2.0 * nu2)
        worst = max(worst, (lhs - rhs).norm() / max(1.0, lhs.norm()))
    assert worst < 1e-9


# -- Spin(7) decomposition -------------------------------------------------------------


def test_spin7_component_dimensions(models):
    sp = spin7_spaces(models["spin7"])
    assert {k: v.rank for k, v in sp.items()} == {
        "2_7": 7, "2_21": 21, "3_8": 8, "3_48": 48,
        "4_1": 1, "4_7": 7, "4_27": 27, "4_35": 35}


def test_spin7_cayley_is_pure_type_one(models):
    s7 = models["spin7"]
    parts = spin7_decompose(s7, s7.Phi0.parts[0])
    assert (parts["1"] - s7.Phi0.parts[0]).norm() < 1e-11
    for lab in ("7", "27", "35"):
        assert parts[lab].norm() < 1e-11


def test_spin7_anti_self_dual_lands_in_35(models, rng):
    s7 = models["spin7"]
    a = Form(8, 4, {ix: complex(rng.normal())
                    for ix in itertools.combinations(range(1, 9), 4)})
    asd = (a - s7.star(a)) * 0.5
    parts = spin7_decompose(s7, asd)
    assert (parts["35"] - asd).norm() <= 1e-10 * max(1.0, asd.norm())
    for lab in ("1", "7", "27"):
        assert parts[lab].norm() <= 1e-10 * max(1.0, asd.norm())


def test_spin7_resolution_of_identity(models, rng):
    s7 = models["spin7"]
    for degree, labels in ((2, ("7", "21")), (3, ("8", "48")), (4, ("1", "7", "27", "35"))):
        a = Form(8, degree, {ix: complex(rng.normal(), rng.normal())
                             for ix in itertools.combinations(range(1, 9), degree)})
        parts = spin7_decompose(s7, a)
        back = None
        for lab in labels:
            back = parts[lab] if back is None else back + parts[lab]
        assert (back - a).norm() <= 1e-10 * a.norm()


# -- CY tangent split ------------------------------------------------------------------


def test_cy_scaling_direction_membership(models):
    cy = models["cy"]
    Om, om = cy.complex_omega(), cy.symplectic_part()
    res = cy_tangent_split(cy, Om, om * (2.0 / 3.0))
    assert all(v < 1e-10 for _, v in res["membership"])
    assert all(v < 1e-10 for _, v in res["linked"])
    # cross-check: the same pair is rho_hat_{Id/3} Phi^0, hence in the E^1 span
    vec = flatten_real(rho_hat(np.eye(6) / 3.0, cy.Phi0))
    assert E_space(cy, 1).residual(vec) < 1e-10


def test_cy_primitive_11_is_member(models, rng):
    cy = models["cy"]
    # random real primitive (1,1) form via the fiber projectors
    from caldef.models import type_projector
    P = type_projector(cy, 2, 1, 1)
    om = cy.symplectic_part()
    raw = Form(6, 2, {ix: complex(rng.normal())
                      for ix in itertools.combinations(range(1, 7), 2)})
    b = Form.from_vec(6, 2, (P @ raw.vec()))
    b = (b + b.conjugate()) * 0.5
    b = b - om * (form_inner(b, om) / form_inner(om, om))
    res = cy_tangent_split(cy, Form.zero(6, 3), b)
    assert all(v < 1e-10 for _, v in res["membership"])
    assert res["beta_prim"].norm() == pytest.approx(b.norm(), rel=1e-10)


def test_cy_generic_pair_violates_eq4(models, rng):
    cy = models["cy"]
    alpha = Form(6, 3, {ix: complex(rng.normal(), rng.normal())
                        for ix in itertools.combinations(range(1, 7), 3)})
    beta = Form(6, 2, {ix: complex(rng.normal())
                       for ix in itertools.combinations(range(1, 7), 2)})
    res = cy_tangent_split(cy, alpha, beta)
    assert max(v for _, v in res["membership"]) > 1e-3


def test_cy_p11_dimension(models):
    assert cy_primitive_11_dim(models["cy"]) == 8


# -- paper-side cohomology tables -------------------------------------------------------


def test_expected_cohomology_values(models):
    assert expected_cohomology(models["cy"]) == {1: 28, 2: 42}
    assert expected_cohomology(models["g2"]) == {1: 35, 2: 49}
    assert expected_cohomology(models["spin7"]) == {1: 43, 2: 56}
    assert expected_cohomology(models["hk"]) == {1: 13, 2: 12}
    assert expected_cohomology(models["symplectic"]) == {1: 6, 2: 4}
    assert expected_cohomology(models["slnc"]) == {1: 20, 2: 24}
