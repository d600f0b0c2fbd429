from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma

from sfcalc.clifford import Multivector, Paravector, e_unit
from sfcalc.errors import NonPositiveCoefficient, NotSeparable, OutsideSector
from sfcalc.gradient import (
    CoefficientField,
    GridSpec,
    build_gradient,
    build_gradient_squared,
    case2_transform,
    clifford_inner,
    d_norm,
    l2_norm,
    sector_resolvent_constant,
    sesquilinear_form_qs,
    sobolev_constant,
    validate_assumptions,
    weak_solve,
)
from sfcalc.io import fmt
from sfcalc.operators import pseudo_resolvent


def test_sobolev_constant_against_gamma():
    for n in (3, 4, 7):
        ref = (gamma(n) / gamma(n / 2)) ** (1 / n) / np.sqrt(np.pi * n * (n - 2))
        assert sobolev_constant(n) == pytest.approx(ref, rel=1e-14)
    assert sobolev_constant(3) == pytest.approx(0.4272605, abs=5e-8)
    assert np.isnan(sobolev_constant(2))


def test_bounds_constant_field():
    b = validate_assumptions(CoefficientField.constant(GridSpec(3, 4)))
    assert (b.m_a, b.M_a, b.M_a_prime, b.M_a_dprime) == pytest.approx((1, np.sqrt(3), 0, 0))
    assert b.case == "both"
    assert b.K_a_case1 == pytest.approx(np.sqrt(3)) and b.K_a == 1.0 and b.omega_min == 0.0
    assert b.M_a >= np.sqrt(3) * b.m_a


def test_bounds_sinusoid():
    g = GridSpec(3, 8)
    b = validate_assumptions(CoefficientField.from_formula("sinusoid", g))
    assert b.m_a == pytest.approx(1.0, abs=1e-12)  # sin hits -1 at x = 3L/4 on the grid
    assert b.M_a == pytest.approx(3 * np.sqrt(3))
    assert b.M_a_dprime == pytest.approx(2 * np.pi / g.L * np.sqrt(3))
    assert b.case == "II" and b.K_a == 1.0 and b.omega_min == 0.0


def test_bounds_case_one_plane_wave():
    b = validate_assumptions(CoefficientField.from_formula("plane_wave", GridSpec(3, 4)))
    assert b.case == "I" and b.margin_case1 > 0
    assert b.K_a == pytest.approx(b.M_a / np.sqrt(b.m_a ** 2 - b.C_S * b.M_a_prime))


def test_nonpositive_rejected():
    fld = CoefficientField.from_formula("sinusoid", GridSpec(2, 4), base=1.0, amplitude=2.0)
    with pytest.raises(NonPositiveCoefficient):
        validate_assumptions(fld)


def test_gradient_examples(rng):
    g = GridSpec(3, 8)
    G = build_gradient(CoefficientField.constant(g))
    u = np.zeros((g.N, 8))
    u[:, 0] = 1.0
    assert np.abs(G.apply(u)).max() == 0.0
    # cosine in x_1 is a mode with k = (1, 0, 0)
    x = g.coords()
    u[:, 0] = np.cos(2 * np.pi * x[0] / g.L)
    out = G.apply(u)
    assert np.abs(np.delete(out, 1, axis=1)).max() < 1e-14
    expect = -np.sin(2 * np.pi / 8) / g.h * np.sin(2 * np.pi * x[0] / g.L)
    assert np.allclose(out[:, 1], expect, atol=1e-13)
    # 2n off-diagonal entries per row of each block pattern
    total = sum((blk != 0).sum(axis=1) for blk in G.blocks.values())
    assert np.all(np.asarray(total).ravel() == 2 * g.n)


def test_right_linearity(rng):
    g = GridSpec(2, 4)
    G = build_gradient(CoefficientField.from_formula("plane_wave", g))
    u = rng.standard_normal((g.N, 4))
    c = Multivector(2, rng.standard_normal(4))
    from sfcalc.clifford import right_matrix
    Rc = right_matrix(2, c.coeffs)
    assert np.allclose(G.apply(u @ Rc.T), G.apply(u) @ Rc.T, atol=1e-12)


@pytest.mark.parametrize("name", ["constant", "sinusoid", "plane_wave"])
def test_square_assembly_matches_composition(name, rng):
    g = GridSpec(3, 4)
    fld = CoefficientField.from_formula(name, g)
    T = build_gradient(fld).real_representation()
    S = build_gradient_squared(fld)
    v = rng.standard_normal((T.dim, 3))
    assert np.linalg.norm(T.matrix @ (T.matrix @ v) - S.matrix @ v) / np.linalg.norm(v) <= 1e-8


def test_square_of_unit_gradient_is_minus_laplacian():
    g = GridSpec(2, 4)
    S = build_gradient_squared(CoefficientField.constant(g)).dense()
    from sfcalc.gradient import difference
    lap = sum((difference(g, i) @ difference(g, i)).toarray() for i in (1, 2))
    assert np.allclose(S, np.kron(-lap, np.eye(4)), atol=1e-14)


def test_b_field_is_imaginary():
    fld = CoefficientField.from_formula("plane_wave", GridSpec(3, 4))
    B = fld.b_field()
    assert np.allclose(B.conj(), -B.values)
    assert np.abs(B.values[..., 0]).max() == 0.0


@pytest.mark.parametrize("name", ["constant", "sinusoid", "plane_wave"])
def test_form_identity(name, rng):
    g = GridSpec(2, 4)
    fld = CoefficientField.from_formula(name, g)
    T = build_gradient(fld).real_representation()
    s = Paravector(0.3, [1.1, -0.4])
    Q = pseudo_resolvent(T, s).matrix
    u, v = rng.standard_normal((2, g.N, 4))
    lhs = sesquilinear_form_qs(u, v, s, fld).coeffs
    rhs = clifford_inner((Q @ u.reshape(-1)).reshape(g.N, 4), v, g).coeffs
    assert np.abs(lhs - rhs).max() <= 1e-8 * max(1.0, np.abs(rhs).max())


def test_form_at_unit_is_energy(rng):
    g = GridSpec(2, 4)
    fld = CoefficientField.constant(g)
    u = rng.standard_normal((g.N, 4))
    q = sesquilinear_form_qs(u, u, e_unit(2, 1), fld).coeffs
    assert q[0] == pytest.approx(d_norm(u, g) ** 2 + l2_norm(u, g) ** 2, rel=1e-12)
    assert q[0] >= 0


def test_ellipticity_case_one(rng):
    g = GridSpec(3, 4)
    fld = CoefficientField.from_formula("plane_wave", g)
    b = validate_assumptions(fld)
    for _ in range(5):
        u = rng.standard_normal((g.N, 8))
        q0 = sesquilinear_form_qs(u, u, Paravector(0.0, [0, 0, 0]), fld).coeffs[0]
        assert q0 >= b.margin_case1 * d_norm(u, g) ** 2


def test_case2_periods():
    g = GridSpec(1, 16, 4.0)
    rep = case2_transform(CoefficientField.constant(g, 2.0))
    assert rep.periods == pytest.approx([2.0])
    g = GridSpec(1, 32, 8.0)
    rep = case2_transform(CoefficientField.from_formula("sinusoid", g))
    ref = quad(lambda u: 1 / (2 + np.sin(2 * np.pi * u / g.L)), 0, g.L)[0]
    assert ref == pytest.approx(g.L / np.sqrt(3), rel=1e-10)
    assert rep.periods == pytest.approx([ref], rel=1e-12)
    with pytest.raises(NotSeparable):
        case2_transform(CoefficientField.from_formula("plane_wave", GridSpec(2, 4)))


def test_case2_spectrum_equivalence():
    errs = [case2_transform(CoefficientField.from_formula("sinusoid", GridSpec(1, m),
                                                          amplitude=0.5)).rel_diff
            for m in (16, 32, 64)]
    assert errs[1] < 5e-3
    # second-order stencil: halving h cuts the mismatch about fourfold
    assert errs[0] / errs[1] > 3 and errs[1] / errs[2] > 3


def test_weak_solve_constant_mode():
    g = GridSpec(2, 4)
    fld = CoefficientField.constant(g)
    f = np.zeros((g.N, 4))
    f[:, 0] = 1.0
    u, rep = weak_solve(e_unit(2, 1), f, fld)
    assert np.allclose(u, f, atol=1e-12)
    assert rep.norm_u == pytest.approx(rep.bound_L2, rel=1e-12) and rep.holds_L2


def test_weak_solve_random(rng):
    g = GridSpec(2, 4)
    fld = CoefficientField.constant(g)
    f = rng.standard_normal((g.N, 4))
    s = Paravector(0.0, [2.0, 0.0])
    u, rep = weak_solve(s, f, fld)
    assert rep.norm_u <= rep.norm_f / 4 and rep.residual <= 1e-10
    assert rep.holds_L2 and rep.holds_D
    with pytest.raises(OutsideSector):
        weak_solve(Paravector(1.0, [0.0, 0.0]), f, fld)


def test_weak_solve_case_one(rng):
    g = GridSpec(3, 4)
    fld = CoefficientField.from_formula("plane_wave", g)
    f = rng.standard_normal((g.N, 8))
    u, rep = weak_solve(e_unit(3, 1), f, fld)
    assert rep.residual <= 1e-10 and rep.holds_L2 and rep.holds_D


def test_sector_constant_blows_up_at_omega():
    b = validate_assumptions(CoefficientField.from_formula("plane_wave", GridSpec(3, 4)))
    assert np.isinf(sector_resolvent_constant(b.omega_min * 0.99, b, 3))
    assert np.isfinite(sector_resolvent_constant(b.omega_min + 0.05, b, 3))


def test_from_csv_roundtrip(tmp_path):
    g = GridSpec(2, 4)
    fld = CoefficientField.from_formula("sinusoid", g)
    path = tmp_path / "a.csv"
    lines = ["axis,index,value"] + [f"{i + 1},{k},{fmt(fld.samples[i, k])}"
                                    for i in range(2) for k in range(g.N)]
    path.write_text("\n".join(lines) + "\n")
    back = CoefficientField.from_csv(path, g)
    assert back.structure == "separable" and back.fd_derivatives
    assert np.array_equal(back.samples, fld.samples)
    assert validate_assumptions(back).fd_derivatives
    path.write_text("axis,index,value\n1,0,1.0\n")
    with pytest.raises(ValueError):
        CoefficientField.from_csv(path, g)


def test_sparse_kernel_dimension():
    g = GridSpec(3, 8)
    T = build_gradient(CoefficientField.constant(g)).real_representation()
    data = T.spectral_data()
    assert data.kernel_dim == 8 * 8  # 8 kernel modes times 8 blades
    assert np.linalg.norm(T.matrix @ data.V) <= 1e-10
