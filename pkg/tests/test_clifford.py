from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import multivectors, paravectors
from sfcalc.clifford import (
    Multivector,
    Paravector,
    SectorGeometry,
    bump,
    e_unit,
    eval_intrinsic,
    frac_power_p,
    frac_power_q,
    geometric_product,
    identity,
    inverse_one_plus_square,
    left_matrix,
    p_power,
    positive_regularizer,
    product_table,
    q_power,
    right_matrix,
    slice_decompose,
    slice_exp,
    slice_log,
    slice_pow,
)
from sfcalc.errors import DimensionMismatch, NonPositiveScalarPart, ZeroScalarPart


def blade_oracle(a: int, b: int) -> tuple[int, float]:
    """e_a e_b by writing out generator lists and bubble sorting them."""
    word = [i for i in range(8) if a >> i & 1] + [i for i in range(8) if b >> i & 1]
    sign = 1.0
    for end in range(len(word) - 1, 0, -1):
        for k in range(end):
            if word[k] > word[k + 1]:
                word[k], word[k + 1] = word[k + 1], word[k]
                sign = -sign
    out, k = [], 0
    while k < len(word):
        if k + 1 < len(word) and word[k] == word[k + 1]:
            sign = -sign  # e_i e_i = -1
            k += 2
        else:
            out.append(word[k])
            k += 1
    return sum(1 << i for i in out), sign


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_product_table_matches_bubble_sort_oracle(n):
    index, sign = product_table(n)
    for a in range(1 << n):
        for b in range(1 << n):
            assert (index[a, b], sign[a, b]) == blade_oracle(a, b)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_generator_relations_exact(n):
    one = Multivector.scalar(n, 1.0)
    for i, j in itertools.product(range(1, n + 1), repeat=2):
        ei, ej = Multivector.e(n, i), Multivector.e(n, j)
        anti = ei * ej + ej * ei
        expected = -2.0 * one if i == j else Multivector.zero(n)
        assert np.array_equal(anti.coeffs, expected.coeffs)


def test_small_products():
    e1 = Multivector.e(3, 1)
    assert (e1 * e1) == Multivector.scalar(3, -1.0)
    assert ((1 + e1) * (1 - e1)) == Multivector.scalar(3, 2.0)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        geometric_product(Multivector.e(2, 1), Multivector.e(3, 1))


@given(st.integers(1, 5).flatmap(lambda n: st.tuples(multivectors(n), multivectors(n), multivectors(n))))
def test_associativity(abc):
    a, b, c = abc
    lhs = (a * b) * c
    rhs = a * (b * c)
    assert np.max(np.abs(lhs.coeffs - rhs.coeffs)) <= 1e-13 * max(1.0, np.abs(lhs.coeffs).max())


@given(multivectors(4), multivectors(4))
def test_left_and_right_matrices(a, b):
    ab = (a * b).coeffs
    assert np.allclose(left_matrix(4, a.coeffs) @ b.coeffs, ab, atol=1e-12)
    assert np.allclose(right_matrix(4, b.coeffs) @ a.coeffs, ab, atol=1e-12)


@given(paravectors(4))
def test_paravector_conjugate_and_norm(s):
    prod = s.to_multivector() * s.conj().to_multivector()
    assert np.allclose(prod.coeffs, Multivector.scalar(4, s.abs2()).coeffs, atol=1e-12)


def test_slice_decompose_examples():
    d = slice_decompose(Paravector(1.0, [0, 2.0, 0]))
    assert (d.x, d.y) == (1.0, 2.0) and d.J.vec == e_unit(3, 2).vec and not d.degenerate
    d = slice_decompose(Paravector(3.0, [0, 0, 0]))
    assert (d.x, d.y, d.degenerate) == (3.0, 0.0, True) and d.J.vec == e_unit(3, 1).vec
    d = slice_decompose(Paravector(1.0, [1.0, 1.0, 0]))
    assert d.y == pytest.approx(np.sqrt(2))
    assert np.allclose(d.J.vec, [2 ** -0.5, 2 ** -0.5, 0])


def test_slice_log_examples():
    assert slice_log(Paravector(np.e, [0, 0])).coeffs[0] == pytest.approx(1.0)
    log = slice_log(Paravector(1.0, [1.0, 0]))
    assert log.coeffs[0] == pytest.approx(np.log(np.sqrt(2)))
    assert log.coeffs[1] == pytest.approx(np.pi / 4)
    with pytest.raises(NonPositiveScalarPart):
        slice_log(Paravector(-1.0, [1.0, 0]))


@given(paravectors(3))
def test_exp_inverts_log(s):
    s = Paravector(abs(s.s0), s.vec)
    back = slice_exp(slice_log(s).to_paravector())
    assert np.allclose(back.coeffs, s.to_multivector().coeffs, rtol=1e-12, atol=1e-12)


def test_fractional_branch_values():
    m4 = Paravector.real(2, -4.0)
    assert frac_power_p(m4, 0.5).coeffs[0] == pytest.approx(-2.0)
    assert frac_power_q(m4, 0.5).coeffs[0] == pytest.approx(2.0)
    m2 = Paravector.real(2, -2.0)
    assert frac_power_p(m2, 2.0).coeffs[0] == pytest.approx(-4.0)
    assert frac_power_q(m2, 2.0).coeffs[0] == pytest.approx(4.0)
    with pytest.raises(ZeroScalarPart):
        frac_power_p(Paravector(0.0, [1.0, 0]), 0.5)


alphas = st.floats(-2.0, 2.0, allow_nan=False)


@given(paravectors(3), alphas)
def test_power_moduli(s, a):
    assert frac_power_p(s, a).norm() == pytest.approx(s.abs() ** a, rel=1e-12)
    assert frac_power_q(s, a).norm() == pytest.approx(s.abs() ** a, rel=1e-12)


def _close(x: Multivector, y: Multivector, tol=1e-12):
    return np.max(np.abs(x.coeffs - y.coeffs)) <= tol * max(1.0, y.norm())


@given(paravectors(3), alphas, alphas)
def test_pointwise_power_rules(s, a, b):
    P = lambda al: frac_power_p(s, al)
    Q = lambda al: frac_power_q(s, al)
    assert _close(P(a) * Q(b), P(a + b)) and _close(Q(a) * P(b), P(a + b))
    assert _close(P(a) * P(b), Q(a + b)) and _close(Q(a) * Q(b), Q(a + b))


@given(paravectors(3), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_pointwise_composition(s, a, b):
    # the laws need s^alpha to stay in the half-plane of s: |alpha| theta < pi/2
    d = slice_decompose(s)
    assume(abs(a) * np.arctan2(d.y, abs(d.x)) < np.pi / 2 - 1e-3)
    pa = frac_power_p(s, a).to_paravector()
    qa = frac_power_q(s, a).to_paravector()
    if min(abs(pa.s0), abs(qa.s0)) < 1e-9:
        return
    assert _close(frac_power_p(pa, b), frac_power_p(s, a * b), 1e-11)
    assert _close(frac_power_q(pa, b), frac_power_q(s, a * b), 1e-11)
    assert _close(frac_power_p(qa, b), frac_power_q(s, a * b), 1e-11)
    assert _close(frac_power_q(qa, b), frac_power_q(s, a * b), 1e-11)


@given(paravectors(3), alphas)
def test_q_is_power_of_square(s, a):
    sq = (s.to_multivector() * s.to_multivector()).to_paravector()
    if sq.s0 <= 0:
        return
    assert _close(frac_power_q(s, a), slice_pow(sq, a / 2.0))


def test_eval_intrinsic_examples():
    s = Paravector(1.0, [0, 0, 2.0])
    assert eval_intrinsic(identity(), s) == s.to_multivector()
    assert eval_intrinsic(inverse_one_plus_square(), Paravector.real(3, 2.0)).coeffs[0] \
        == pytest.approx(0.2)


@given(paravectors(3), alphas)
def test_eval_intrinsic_agrees_with_direct_powers(s, a):
    assert _close(eval_intrinsic(p_power(a), s), frac_power_p(s, a), 1e-13)
    assert _close(eval_intrinsic(q_power(a), s), frac_power_q(s, a), 1e-13)


@pytest.mark.parametrize("f", [p_power(0.5), q_power(0.7), bump(), positive_regularizer(2),
                               inverse_one_plus_square()], ids=lambda f: f.name)
@given(s=paravectors(3))
def test_intrinsic_symmetry(f, s):
    d = slice_decompose(s)
    u1, v1 = f.components(d.x, d.y)
    u2, v2 = f.components(d.x, -d.y)
    assert u1 == pytest.approx(u2, rel=1e-13, abs=1e-15)
    assert v1 == pytest.approx(-v2, rel=1e-13, abs=1e-15)
    # s = x + J y = x + (-J)(-y)
    flipped = Paravector(s.s0, s.vec)
    assert _close(eval_intrinsic(f, flipped), eval_intrinsic(f, s), 1e-14)


def test_sector_membership():
    g = SectorGeometry(np.pi / 6)
    assert g.contains(Paravector(1.0, [0.1, 0]))
    assert g.contains(Paravector(-1.0, [0.0, 0.1]))
    assert not g.contains(Paravector(0.1, [1.0, 0]))
    assert not SectorGeometry(np.pi / 6, "single").contains(Paravector(-1.0, [0.1, 0]))
