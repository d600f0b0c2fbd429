"""Nonlocal Fourier law on the periodic grid and the fractional heat dynamics it drives.

Temperature fields are real arrays of shape ``(N,)`` (or ``(N, k)`` for a
batch); heat fluxes are arrays ``(n, N[, k])`` holding the components of
``w = sum_i w_i e_i``. The generator of the dynamics is
``G = div o p_alpha(grad_a)`` and ``A = -G`` is the operator of the
stationary problem ``(lambda + A) v = f``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .calculus import ContourSpec, frac_power_p_op, sectorial_power
from .clifford import left_matrix, e_unit
from .errors import DomainError, GradeLeak, NotSeparable, SingularShift
from .gradient import CoefficientField, GridSpec, build_gradient, difference
from .operators import RealRep

GRADE_TOL = 1e-6


# ---- embeddings and grade bookkeeping ----------------------------------------

def scalar_module(v: np.ndarray, n: int) -> np.ndarray:
    """Real grid function(s) as module elements: shape (N, 2**n[, k])."""
    v = np.asarray(v, dtype=float)
    out = np.zeros((v.shape[0], 1 << n) + v.shape[1:])
    out[:, 0] = v
    return out


def vector_module(w: np.ndarray, n: int) -> np.ndarray:
    """Flux components (n, N[, k]) as module elements sum_i w_i e_i."""
    w = np.asarray(w, dtype=float)
    out = np.zeros((w.shape[1], 1 << n) + w.shape[2:])
    for i in range(n):
        out[:, 1 << i] = w[i]
    return out


def grade_masses(Y: np.ndarray, n: int) -> np.ndarray:
    """Squared norm carried by each grade 0..n of module elements ``(N, 2**n, ...)``."""
    Y = np.asarray(Y)
    grades = np.array([bin(mask).count("1") for mask in range(1 << n)])
    per_blade = np.sum(np.abs(Y) ** 2, axis=tuple(a for a in range(Y.ndim) if a != 1))
    return np.bincount(grades, weights=per_blade, minlength=n + 1)


def _leak(Y: np.ndarray, n: int, grade: int) -> float:
    m = grade_masses(Y, n)
    total = m.sum()
    if total == 0.0:
        return 0.0
    return float(np.sqrt(max(total - m[grade], 0.0) / total))


def _check_grade(Y: np.ndarray, n: int, grade: int, tol: float = GRADE_TOL) -> None:
    leak = _leak(Y, n, grade)
    if leak > tol:
        raise GradeLeak(f"{leak:.3e} of the output norm lies outside grade {grade}")


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 2.0:
        raise DomainError(f"heat law needs alpha in (0, 2), got {alpha}")


def _require_case_two(fld: CoefficientField) -> None:
    if fld.structure not in ("constant", "separable"):
        raise NotSeparable(f"flux needs constant or separable coefficients, field is {fld.structure!r}")


def _constant_value(fld: CoefficientField) -> float:
    if fld.structure != "constant":
        raise DomainError("FFT paths need constant coefficients")
    return float(fld.samples[0, 0])


def gradient_rep(fld: CoefficientField) -> RealRep:
    return build_gradient(fld).real_representation()


# ---- FFT oracle ----------------------------------------------------------------

def _fft(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    U = np.asarray(u).reshape(grid.shape + u.shape[1:])
    return np.fft.fftn(U, axes=tuple(range(grid.n)))


def _ifft(U: np.ndarray, grid: GridSpec) -> np.ndarray:
    u = np.fft.ifftn(U, axes=tuple(range(grid.n)))
    return u.reshape((grid.N,) + U.shape[grid.n:])


def _mode_array(x: np.ndarray, grid: GridSpec, extra: int) -> np.ndarray:
    return x.reshape(grid.shape + (1,) * extra)


def mu_symbol(grid: GridSpec, c: float = 1.0) -> np.ndarray:
    """c^2 sum_j sin^2(theta_j) / h^2 per mode, the DFT symbol of grad_h^2."""
    return c * c * grid.symbol_sq()


def _power_off_kernel(mu: np.ndarray, beta: float, kernel: np.ndarray) -> np.ndarray:
    out = np.zeros_like(mu)
    out[~kernel] = mu[~kernel] ** beta
    return out


def fft_oracle(u: np.ndarray, alpha: float, mode: str, grid: GridSpec, c: float = 1.0,
               module: bool = False) -> np.ndarray:
    """Exact spectral multiplier for the constant field a = c.

    ``mode`` is ``"q"`` (q_alpha), ``"p"`` (p_alpha) or ``"div_p"``
    (div o p_alpha). Inputs are scalar grid functions ``(N[, k])`` or, with
    ``module=True``, module elements ``(N, 2**n[, k])``. For scalar input the
    p-mode returns flux components ``(n, N[, k])``. Modes in the kernel of
    the gradient are sent to zero.
    """
    u = np.asarray(u, dtype=float)
    n = grid.n
    kernel = grid.kernel_modes()
    mu = mu_symbol(grid, c)
    extra = u.ndim - 1
    U = _fft(u, grid)
    if mode == "q":
        mult = _mode_array(_power_off_kernel(mu, alpha / 2.0, kernel), grid, extra)
        return _ifft(mult * U, grid).real
    if mode == "div_p":
        if module:
            raise ValueError("div_p acts on scalar fields")
        mult = -_power_off_kernel(mu, (alpha + 1.0) / 2.0, kernel) / c
        return _ifft(_mode_array(mult, grid, extra) * U, grid).real
    if mode != "p":
        raise ValueError(f"unknown oracle mode {mode!r}")
    radial = _power_off_kernel(mu, (alpha - 1.0) / 2.0, kernel)
    theta = grid.angles()
    parts = []
    for j in range(n):
        mult = c * 1j * np.sin(theta[j]) / grid.h * radial
        parts.append(_ifft(_mode_array(mult, grid, extra) * U, grid).real)
    if not module:
        return np.stack(parts)
    out = np.zeros_like(u)
    for j, part in enumerate(parts):
        L = left_matrix(n, e_unit(n, j + 1).to_multivector().coeffs)
        out += np.einsum("ab,nb...->na...", L, part)
    return out


# ---- flux and divergence -----------------------------------------------------

def divergence(w: np.ndarray, grid: GridSpec) -> np.ndarray:
    """sum_i D_i w_i with the central-difference stencil of the gradient."""
    w = np.asarray(w, dtype=float)
    if w.shape[0] != grid.n:
        raise ValueError(f"flux has {w.shape[0]} components, grid has dimension {grid.n}")
    out = difference(grid, 1) @ w[0]
    for i in range(1, grid.n):
        out = out + difference(grid, i + 1) @ w[i]
    return out


def fractional_flux(v: np.ndarray, alpha: float, fld: CoefficientField, method: str = "auto",
                    contour: ContourSpec | None = None, T: RealRep | None = None,
                    tol_grade: float = GRADE_TOL) -> np.ndarray:
    """q = -p_alpha(grad_a) v, kernel modes removed; returns components (n, N[, k])."""
    _check_alpha(alpha)
    _require_case_two(fld)
    grid = fld.grid
    v = np.asarray(v, dtype=float)
    if v.shape[0] != grid.N:
        raise ValueError(f"temperature has {v.shape[0]} points, grid has {grid.N}")
    if method == "auto":
        method = "fft" if fld.structure == "constant" else "calculus"
    if method == "fft":
        return -fft_oracle(v, alpha, "p", grid, _constant_value(fld))
    if method != "calculus":
        raise ValueError(f"unknown flux method {method!r}")
    T = T if T is not None else gradient_rep(fld)
    X = scalar_module(v, grid.n)
    Y = frac_power_p_op(T, alpha, contour, X.reshape(T.dim, -1), off_kernel=True)
    Y = -Y.reshape(X.shape)
    _check_grade(Y, grid.n, 1, tol_grade)
    return np.stack([Y[:, 1 << i] for i in range(grid.n)])


# ---- generator -----------------------------------------------------------------

def _op_key(alpha: float, fld: CoefficientField, route: str) -> str:
    h = hashlib.sha256()
    g = fld.grid
    h.update(f"{alpha!r}|{route}|{g.n}|{g.m}|{g.L!r}".encode())
    h.update(np.ascontiguousarray(fld.samples, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def heat_operator(alpha: float, fld: CoefficientField, route: str = "clifford",
                  contour: ContourSpec | None = None, T: RealRep | None = None,
                  cache_dir=None) -> np.ndarray:
    """Dense A = -div o p_alpha(grad_a) acting on real grid functions.

    ``route="clifford"`` applies p_alpha of the Clifford gradient to every
    scalar unit vector. ``route="scalar"`` uses p_alpha = grad_a q_{alpha-1}
    with q_{alpha-1} taken as a power of the scalar operator grad_a^2, which
    is available because the coefficients are separable. With ``cache_dir``
    the matrix is stored in the binary operator format and reused.
    """
    _check_alpha(alpha)
    _require_case_two(fld)
    path = None
    if cache_dir is not None:
        from .io import read_operator
        path = Path(cache_dir) / f"heatop-{route}-{_op_key(alpha, fld, route)}.bin"
        if path.exists():
            return read_operator(path)[0]
    grid = fld.grid
    if route == "clifford":
        T = T if T is not None else gradient_rep(fld)
        X = scalar_module(np.eye(grid.N), grid.n)
        Y = frac_power_p_op(T, alpha, contour, X.reshape(T.dim, -1), off_kernel=True)
        Y = Y.reshape(X.shape)
        _check_grade(Y, grid.n, 1)
        w = np.stack([Y[:, 1 << i] for i in range(grid.n)])
    elif route == "scalar":
        w = _flux_columns_scalar(alpha, fld, contour)
    else:
        raise ValueError(f"unknown route {route!r}")
    A = -np.asarray(divergence(w, grid))
    if path is not None:
        from .io import write_operator
        write_operator(path, A, 0, grid.N, {"alpha": alpha, "route": route, "field": fld.name})
    return A


def scalar_square(fld: CoefficientField) -> sp.csr_matrix:
    """grad_a^2 restricted to scalars, -sum_i a_i D_i a_i D_i; needs separable a."""
    grid = fld.grid
    D = [difference(grid, i) for i in range(1, grid.n + 1)]
    A = [sp.diags(fld.samples[j]) for j in range(grid.n)]
    for i in range(grid.n):
        for j in range(grid.n):
            if i != j and abs(D[i] @ A[j] - A[j] @ D[i]).max() > 0:
                raise NotSeparable(f"a_{j + 1} varies along axis {i + 1}")
    S = sp.csr_matrix((grid.N, grid.N))
    for i in range(grid.n):
        S = S - A[i] @ D[i] @ A[i] @ D[i]
    return S.tocsr()


def _flux_columns_scalar(alpha: float, fld: CoefficientField, contour: ContourSpec | None):
    grid = fld.grid
    S = RealRep(scalar_square(fld).toarray(), 0, grid.N)
    Qv = sectorial_power(S, (alpha - 1.0) / 2.0, contour, np.eye(grid.N), off_kernel=True)
    return np.stack([fld.samples[i][:, None] * (difference(grid, i + 1) @ Qv)
                     for i in range(grid.n)])


# ---- stationary problem -------------------------------------------------------

def _real_lambda(lam) -> float:
    if np.iscomplexobj(lam) and np.imag(lam) != 0:
        raise DomainError("only real lambda is supported")
    return float(np.real(lam))


def shift_matrix(lam: float, alpha: float, fld: CoefficientField, **kw) -> np.ndarray:
    """lambda I + A, the matrix of v -> lambda v - div p_alpha(grad_a) v."""
    lam = _real_lambda(lam)
    A = heat_operator(alpha, fld, **kw)
    return lam * np.eye(A.shape[0]) + A


def _solve_checked(M: np.ndarray, f: np.ndarray, rtol: float) -> np.ndarray:
    sv = sla.svdvals(M, check_finite=False)
    if sv[-1] <= rtol * max(sv[0], 1.0):
        raise SingularShift(f"lambda + A is singular (sigma_min = {sv[-1]:.3e})")
    return sla.solve(M, f, check_finite=False)


def spectral_solve(lam: float, f: np.ndarray, alpha: float, fld: CoefficientField,
                   method: str = "auto", rtol: float = 1e-12, A: np.ndarray | None = None,
                   **kw) -> np.ndarray:
    """Solve lambda v - div p_alpha(grad_a) v = f for real lambda.

    Constant coefficients default to per-mode division; otherwise (or with
    ``method="matrix"``) A is materialized once and the dense system solved.
    """
    lam = _real_lambda(lam)
    _check_alpha(alpha)
    grid = fld.grid
    f = np.asarray(f, dtype=float)
    if method == "auto":
        method = "fft" if fld.structure == "constant" and A is None else "matrix"
    if method == "fft":
        c = _constant_value(fld)
        den = lam + _power_off_kernel(mu_symbol(grid, c), (alpha + 1.0) / 2.0, grid.kernel_modes()) / c
        if np.min(np.abs(den)) <= rtol * max(np.max(np.abs(den)), 1.0):
            raise SingularShift(f"lambda = {lam} hits the symbol of A")
        F = _fft(f, grid)
        return _ifft(F / _mode_array(den, grid, f.ndim - 1), grid).real
    if method != "matrix":
        raise ValueError(f"unknown solve method {method!r}")
    if A is None:
        A = heat_operator(alpha, fld, **kw)
    return _solve_checked(lam * np.eye(grid.N) + A, f, rtol)


# ---- time evolution -------------------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    energy: np.ndarray
    vmin: np.ndarray
    vmax: np.ndarray
    final: np.ndarray
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)

    def rows(self):
        return zip(self.t, self.energy, self.vmin, self.vmax)


def energy(v: np.ndarray, grid: GridSpec) -> float:
    return float(grid.cell * np.sum(np.asarray(v) ** 2))


def evolve(v0: np.ndarray, alpha: float, fld: CoefficientField, dt: float, steps: int,
           scheme: str = "implicit-euler", method: str = "auto", A: np.ndarray | None = None,
           snapshot_every: int = 0, **kw) -> Trajectory:
    """Integrate dv/dt = div p_alpha(grad_a) v from v0.

    ``implicit-euler`` solves (I + dt A) v_{k+1} = v_k, by per-mode division
    for constant coefficients or one LU factorization otherwise.
    ``exact-fft`` multiplies each mode by its exact decay factor and needs
    constant coefficients.
    """
    _check_alpha(alpha)
    if dt <= 0 or steps < 0:
        raise ValueError("need dt > 0 and steps >= 0")
    grid = fld.grid
    v = np.asarray(v0, dtype=float).copy()
    kernel = grid.kernel_modes()
    if scheme == "exact-fft":
        c = _constant_value(fld)
        rate = _power_off_kernel(mu_symbol(grid, c), (alpha + 1.0) / 2.0, kernel) / c
        V0 = _fft(v, grid)

        def state(k):
            return _ifft(np.exp(-rate * dt * k).reshape(grid.shape) * V0, grid).real
    elif scheme == "implicit-euler":
        if method == "auto":
            method = "fft" if fld.structure == "constant" and A is None else "matrix"
        if method == "fft":
            c = _constant_value(fld)
            damp = 1.0 / (1.0 + dt * _power_off_kernel(mu_symbol(grid, c), (alpha + 1.0) / 2.0,
                                                       kernel) / c)
            step = lambda u: _ifft(damp.reshape(grid.shape) * _fft(u, grid), grid).real
        else:
            if A is None:
                A = heat_operator(alpha, fld, **kw)
            lu = sla.lu_factor(np.eye(grid.N) + dt * A, check_finite=False)
            step = lambda u: sla.lu_solve(lu, u, check_finite=False)
        cur = [v]

        def state(k):
            # sequential by construction; k only ever advances by one
            if k > 0:
                cur[0] = step(cur[0])
            return cur[0]
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    ts, es, lo, hi, snaps = [], [], [], [], []
    for k in range(steps + 1):
        u = state(k)
        ts.append(k * dt)
        es.append(energy(u, grid))
        lo.append(float(np.min(u)))
        hi.append(float(np.max(u)))
        if snapshot_every and k % snapshot_every == 0:
            snaps.append((k, u.copy()))
        v = u
    return Trajectory(np.array(ts), np.array(es), np.array(lo), np.array(hi), v, snaps)
