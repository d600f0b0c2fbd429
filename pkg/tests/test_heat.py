from __future__ import annotations

import numpy as np
import pytest

from sfcalc.errors import DomainError, GradeLeak, NotSeparable, SingularShift
from sfcalc.gradient import CoefficientField, GridSpec, difference
from sfcalc.heat import (
    _check_grade,
    divergence,
    energy,
    evolve,
    fft_oracle,
    fractional_flux,
    grade_masses,
    heat_operator,
    mu_symbol,
    scalar_module,
    spectral_solve,
    vector_module,
)
from sfcalc.io import read_operator

G2 = GridSpec(2, 8)


def laplacian(g):
    return sum((difference(g, i) @ difference(g, i)).toarray() for i in range(1, g.n + 1))


def mode(g, k):
    """cos(2 pi k.x / L) on the grid."""
    x = g.coords()
    return np.cos(2 * np.pi * np.tensordot(k, x, axes=1) / g.L)


def mode_mu(g, k, c=1.0):
    th = 2 * np.pi * np.asarray(k) / g.m
    return c * c * np.sum(np.sin(th) ** 2) / g.h ** 2


def test_oracle_integer_powers(rng):
    g = GridSpec(2, 8, 4.0)
    u = rng.standard_normal(g.N)
    c = 1.7
    lap = laplacian(g)
    assert np.allclose(fft_oracle(u, 2.0, "q", g, c), -c * c * lap @ u, atol=1e-12)
    p1 = fft_oracle(u, 1.0, "p", g, c)
    for j in range(2):
        assert np.allclose(p1[j], c * difference(g, j + 1) @ u, atol=1e-12)


def test_oracle_semigroup(rng):
    u = rng.standard_normal((G2.N, 3))
    a = fft_oracle(fft_oracle(u, 0.3, "q", G2), 0.9, "q", G2)
    b = fft_oracle(u, 1.2, "q", G2)
    assert np.linalg.norm(a - b) <= 1e-12 * np.linalg.norm(u)


def test_oracle_module_matches_scalar(rng):
    v = rng.standard_normal(G2.N)
    P = fft_oracle(scalar_module(v, 2), 0.5, "p", G2, module=True)
    assert np.allclose(P, vector_module(fft_oracle(v, 0.5, "p", G2), 2), atol=1e-14)
    with pytest.raises(ValueError):
        fft_oracle(v, 0.5, "r", G2)


def test_flux_alpha_one_is_minus_gradient(rng):
    v = rng.standard_normal(G2.N)
    fld = CoefficientField.constant(G2)
    w = fractional_flux(v, 1.0, fld, method="calculus")
    for j in range(2):
        assert np.allclose(w[j], -(difference(G2, j + 1) @ v), atol=1e-12)


def test_flux_single_mode_against_symbol():
    k = (1, 2)
    v = mode(G2, k)
    w = fractional_flux(v, 0.5, CoefficientField.constant(G2), method="calculus")
    mu = mode_mu(G2, k)
    for j in range(2):
        ref = -(difference(G2, j + 1) @ v) * mu ** -0.25
        assert np.linalg.norm(w[j] - ref) <= 1e-6 * np.linalg.norm(ref)


def test_flux_grade_on_separable(rng):
    fld = CoefficientField.from_formula("sinusoid", G2, amplitude=0.5)
    v = rng.standard_normal((G2.N, 2))
    w = fractional_flux(v, 1.5, fld, method="calculus")
    assert w.shape == (2, G2.N, 2) and np.isfinite(w).all()
    with pytest.raises(NotSeparable):
        fractional_flux(v, 0.5, CoefficientField.from_formula("plane_wave", G2))
    with pytest.raises(DomainError):
        fractional_flux(v, 2.0, fld)


def test_grade_check():
    Y = np.zeros((4, 4))
    Y[:, 1] = 1.0
    assert grade_masses(Y, 2).tolist() == [0.0, 4.0, 0.0]
    _check_grade(Y, 2, 1)
    Y[0, 3] = 0.1
    with pytest.raises(GradeLeak):
        _check_grade(Y, 2, 1)


def test_divergence_examples(rng):
    v = rng.standard_normal(G2.N)
    grad = np.stack([difference(G2, j) @ v for j in (1, 2)])
    assert np.allclose(divergence(grad, G2), laplacian(G2) @ v, atol=1e-12)
    assert np.abs(divergence(np.ones((2, G2.N)), G2)).max() == 0.0


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_div_p_single_mode(alpha):
    k = (1, 3)
    v = mode(G2, k)
    out = divergence(fractional_flux(v, alpha, CoefficientField.constant(G2), method="calculus"), G2)
    # the flux carries the minus sign, so div q = +mu^((alpha+1)/2) v
    assert np.allclose(out, mode_mu(G2, k) ** ((alpha + 1) / 2) * v, atol=1e-8)


def test_heat_operator_routes_agree(tmp_path):
    fld = CoefficientField.from_formula("sinusoid", GridSpec(2, 4), amplitude=0.5)
    a = heat_operator(0.7, fld, route="clifford", cache_dir=tmp_path)
    b = heat_operator(0.7, fld, route="scalar")
    assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(b)
    cached = list(tmp_path.glob("heatop-clifford-*.bin"))
    assert len(cached) == 1
    M, _ = read_operator(cached[0])
    assert np.array_equal(M, a)
    assert np.array_equal(heat_operator(0.7, fld, route="clifford", cache_dir=tmp_path), a)


def test_heat_operator_constant_matches_oracle():
    fld = CoefficientField.constant(G2, 1.5)
    A = heat_operator(1.3, fld)
    ref = -fft_oracle(np.eye(G2.N), 1.3, "div_p", G2, 1.5)
    assert np.linalg.norm(A - ref) <= 1e-8 * np.linalg.norm(ref)


def test_spectral_solve_symbols(rng):
    fld = CoefficientField.constant(G2)
    f = rng.standard_normal(G2.N)
    F = np.fft.fft2(f.reshape(8, 8))
    mu = mu_symbol(G2).reshape(8, 8)
    for alpha, power in ((1.0, 1.0), (0.5, 0.75)):
        v = spectral_solve(1.0, f, alpha, fld)
        assert np.allclose(np.fft.fft2(v.reshape(8, 8)), F / (1 + mu ** power), atol=1e-12)
        vm = spectral_solve(1.0, f, alpha, fld, method="matrix")
        assert np.allclose(v, vm, atol=1e-10)


def test_spectral_solve_errors():
    fld = CoefficientField.constant(G2)
    f = np.ones(G2.N)
    with pytest.raises(SingularShift):
        spectral_solve(0.0, f, 1.0, fld)
    with pytest.raises(SingularShift):
        spectral_solve(0.0, f, 1.0, fld, method="matrix")
    with pytest.raises(DomainError):
        spectral_solve(1 + 1j, f, 1.0, fld)


def test_exact_decay_single_mode():
    k = (2, 1)
    v0 = mode(G2, k)
    fld = CoefficientField.constant(G2)
    for alpha in (0.5, 1.5):
        tr = evolve(v0, alpha, fld, 0.1, 10, scheme="exact-fft")
        rate = mode_mu(G2, k) ** ((alpha + 1) / 2)
        assert np.allclose(tr.final, np.exp(-rate) * v0, atol=1e-12)


def test_zero_data_and_mean_conservation(rng):
    fld = CoefficientField.constant(G2)
    tr = evolve(np.zeros(G2.N), 1.0, fld, 0.1, 3)
    assert np.all(tr.energy == 0)
    v0 = rng.standard_normal(G2.N) + 2.0
    tr = evolve(v0, 0.5, fld, 0.2, 20, scheme="exact-fft", snapshot_every=5)
    assert abs(tr.final.mean() - v0.mean()) <= 1e-12
    assert [k for k, _ in tr.snapshots] == [0, 5, 10, 15, 20]


def test_energy_monotone_variable_coefficients(rng):
    fld = CoefficientField.from_formula("sinusoid", GridSpec(2, 4), amplitude=0.5)
    v0 = rng.standard_normal(16)
    for alpha in (0.5, 1.0, 1.5):
        tr = evolve(v0, alpha, fld, 0.05, 10)
        assert np.all(np.diff(tr.energy) <= 1e-14 * tr.energy[0])
        assert tr.energy[0] == pytest.approx(energy(v0, fld.grid))


def test_high_modes_decay_faster_for_larger_alpha():
    v0 = mode(G2, (2, 2))  # mu = 8 > 1
    fld = CoefficientField.constant(G2)
    slow = evolve(v0, 0.5, fld, 0.05, 4, scheme="exact-fft").energy[-1]
    fast = evolve(v0, 1.5, fld, 0.05, 4, scheme="exact-fft").energy[-1]
    assert fast < slow


def test_exact_fft_needs_constant_field():
    fld = CoefficientField.from_formula("sinusoid", GridSpec(2, 4))
    with pytest.raises(DomainError):
        evolve(np.ones(16), 1.0, fld, 0.1, 1, scheme="exact-fft")
