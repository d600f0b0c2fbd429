"""Variable-coefficient gradient nabla_a = sum_i e_i a_i(x) d/dx_i on a periodic grid.

Grid functions with values in R_n are stored point-major as ``(N, 2**n)``
arrays, N = m**n, with the point index in C order over the axes. The
derivative along axis i is the periodic central difference D_i, whose DFT
symbol is i sin(theta_i)/h.

Discrete products of coefficients and differences are kept in the exact
commutator form ``D_i diag(a_j) = diag(a_j) D_i + [D_i, diag(a_j)]``. The
assembled square and the form q_s then agree with the composed operators to
rounding error rather than to discretization error.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .clifford import Multivector, Paravector, left_matrix, product_table
from .errors import (
    CaseIFailed,
    NonPositiveCoefficient,
    NotSeparable,
    OutsideSector,
)
from .operators import CliffordMatrix, RealRep, pseudo_resolvent, pseudo_resolvent_solve


# ---- grid ----------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    n: int = 3
    m: int = 8
    L: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("spatial dimension must be positive")
        if self.m < 4 or self.m % 2:
            raise ValueError(f"points per axis must be even and >= 4, got {self.m}")
        if self.L is None:
            object.__setattr__(self, "L", float(self.m))
        if self.L <= 0:
            raise ValueError("period must be positive")

    @property
    def h(self) -> float:
        return self.L / self.m

    @property
    def N(self) -> int:
        return self.m ** self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.n

    @property
    def blades(self) -> int:
        return 1 << self.n

    @property
    def cell(self) -> float:
        """Quadrature weight h**n of one grid point."""
        return self.h ** self.n

    def coords(self) -> np.ndarray:
        """(n, N) array of grid coordinates x_i = h * index_i."""
        idx = np.indices(self.shape).reshape(self.n, -1)
        return self.h * idx

    def angles(self) -> np.ndarray:
        """(n, N) DFT angles theta_i = 2 pi k_i / m in the same flat order."""
        k = np.indices(self.shape).reshape(self.n, -1)
        return 2.0 * np.pi * k / self.m

    def symbol_sq(self) -> np.ndarray:
        """sum_i sin(theta_i)^2 / h^2 per DFT mode, flat order."""
        return np.sum(np.sin(self.angles()) ** 2, axis=0) / self.h ** 2

    def kernel_modes(self) -> np.ndarray:
        """Boolean mask of DFT modes annihilated by every D_i."""
        return np.all(np.isclose(np.sin(self.angles()), 0.0, atol=1e-12), axis=0)


def difference_1d(m: int, h: float) -> sp.csr_matrix:
    """Periodic central difference (u[k+1] - u[k-1]) / 2h."""
    fwd = sp.diags([np.ones(m - 1), np.ones(1)], [1, -(m - 1)], shape=(m, m))
    return ((fwd - fwd.T) / (2.0 * h)).tocsr()


def difference(grid: GridSpec, axis: int) -> sp.csr_matrix:
    """D_axis on the flattened grid; ``axis`` counts from 1."""
    if not 1 <= axis <= grid.n:
        raise ValueError(f"axis {axis} out of range")
    left = sp.identity(grid.m ** (axis - 1), format="csr")
    right = sp.identity(grid.m ** (grid.n - axis), format="csr")
    return sp.kron(sp.kron(left, difference_1d(grid.m, grid.h)), right, format="csr")


# ---- coefficient fields ---------------------------------------------------

def _constant(grid: GridSpec, value=1.0):
    vals = np.broadcast_to(np.asarray(value, dtype=float), (grid.n,))
    samples = np.repeat(vals[:, None], grid.N, axis=1)
    return samples, np.zeros((grid.n, grid.n, grid.N)), "constant"


def _sinusoid(grid: GridSpec, base=2.0, amplitude=1.0, wavenumber=1, phase=0.0):
    """a_i(x) = base + amplitude sin(2 pi k x_i / L + phase): separable."""
    x = grid.coords()
    w = 2.0 * np.pi * wavenumber / grid.L
    samples = base + amplitude * np.sin(w * x + phase)
    der = np.zeros((grid.n, grid.n, grid.N))
    for i in range(grid.n):
        der[i, i] = amplitude * w * np.cos(w * x[i] + phase)
    return samples, der, "separable"


def _plane_wave(grid: GridSpec, base=2.0, amplitude=0.1, wavenumber=1):
    """a_i(x) = base + amplitude sin(2 pi k (x_1 + ... + x_n) / L + 2 pi i / n)."""
    x = grid.coords().sum(axis=0)
    w = 2.0 * np.pi * wavenumber / grid.L
    shifts = 2.0 * np.pi * np.arange(grid.n) / grid.n
    arg = w * x[None, :] + shifts[:, None]
    samples = base + amplitude * np.sin(arg)
    der = np.repeat((amplitude * w * np.cos(arg))[:, None, :], grid.n, axis=1)
    return samples, der, "general"


FORMULAS: dict[str, Callable] = {
    "constant": _constant,
    "sinusoid": _sinusoid,
    "plane_wave": _plane_wave,
}


@dataclass
class CoefficientField:
    """Samples a_i(x) on the grid with derivative samples d a_i / d x_j.

    ``derivatives[i, j]`` holds d a_i / d x_j. Fields read from data carry
    central finite-difference derivatives and ``fd_derivatives=True``.
    """

    grid: GridSpec
    samples: np.ndarray
    structure: str
    derivatives: np.ndarray
    name: str = "field"
    params: dict = field(default_factory=dict)
    fd_derivatives: bool = False

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.shape != (self.grid.n, self.grid.N):
            raise ValueError(f"samples must have shape {(self.grid.n, self.grid.N)}")
        if self.structure not in ("constant", "separable", "general"):
            raise ValueError(f"unknown structure {self.structure!r}")

    @classmethod
    def from_formula(cls, name: str, grid: GridSpec, **params) -> CoefficientField:
        if name not in FORMULAS:
            raise KeyError(f"unknown coefficient formula {name!r}; known: {sorted(FORMULAS)}")
        samples, der, structure = FORMULAS[name](grid, **params)
        return cls(grid, samples, structure, der, name, dict(params))

    @classmethod
    def constant(cls, grid: GridSpec, value=1.0) -> CoefficientField:
        return cls.from_formula("constant", grid, value=value)

    @classmethod
    def from_samples(cls, grid: GridSpec, samples, structure: str | None = None,
                     name: str = "samples") -> CoefficientField:
        samples = np.asarray(samples, dtype=float).reshape(grid.n, grid.N)
        der = np.stack([np.stack([difference(grid, j + 1) @ samples[i] for j in range(grid.n)])
                        for i in range(grid.n)])
        if structure is None:
            structure = _detect_structure(grid, samples)
        return cls(grid, samples, structure, der, name, fd_derivatives=True)

    @classmethod
    def from_csv(cls, path, grid: GridSpec, structure: str | None = None) -> CoefficientField:
        """CSV with header ``axis,index,value``; axis counts from 1, index is flat."""
        samples = np.full((grid.n, grid.N), np.nan)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(reader.fieldnames) != {"axis", "index", "value"}:
                raise ValueError("coefficient CSV needs columns axis,index,value")
            for row in reader:
                samples[int(row["axis"]) - 1, int(row["index"])] = float(row["value"])
        if np.isnan(samples).any():
            raise ValueError("coefficient CSV does not cover every axis and grid point")
        return cls.from_samples(grid, samples, structure, name=Path(path).name)

    def b_field(self) -> BField:
        return BField.from_field(self)


def _detect_structure(grid: GridSpec, samples: np.ndarray) -> str:
    if np.allclose(samples, samples[:, :1]):
        return "constant"
    for i in range(grid.n):
        arr = samples[i].reshape(grid.shape)
        other = tuple(j for j in range(grid.n) if j != i)
        if other and not np.allclose(arr, arr.mean(axis=other, keepdims=True)):
            return "general"
    return "separable"


# ---- assumption checks ---------------------------------------------------

def sobolev_constant(n: int) -> float:
    """(1/sqrt(pi n (n-2))) (Gamma(n)/Gamma(n/2))^(1/n); NaN for n <= 2."""
    if n <= 2:
        return float("nan")
    return float(np.exp((gammaln(n) - gammaln(n / 2)) / n) / np.sqrt(np.pi * n * (n - 2)))


@dataclass
class CoefficientBounds:
    m_a: float
    M_a: float
    M_a_prime: float
    M_a_dprime: float
    C_S: float
    K_a: float
    K_a_case1: float
    K_a_case2: float
    case: str
    omega_min: float
    margin_case1: float
    separable: bool
    fd_derivatives: bool

    def rows(self) -> list[tuple[str, object]]:
        return [(k, getattr(self, k)) for k in (
            "case", "m_a", "M_a", "M_a_prime", "M_a_dprime", "C_S", "margin_case1",
            "K_a_case1", "K_a_case2", "K_a", "omega_min", "separable", "fd_derivatives")]


def _ln_norm(values: np.ndarray, grid: GridSpec) -> float:
    """Discrete L^n norm over one period: (sum |v|^n h^n)^(1/n)."""
    n = grid.n
    return float((np.sum(np.abs(values) ** n) * grid.cell) ** (1.0 / n))


def validate_assumptions(fld: CoefficientField, raise_on_failure: bool = True) -> CoefficientBounds:
    grid = fld.grid
    a = fld.samples
    if np.any(a <= 0) or not np.all(np.isfinite(a)):
        bad = int(np.argmin(np.min(a, axis=1)))
        raise NonPositiveCoefficient(f"coefficient a_{bad + 1} is not strictly positive "
                                     f"(min {a[bad].min():.4g})")
    n = grid.n
    d = fld.derivatives
    m_a = float(a.min())
    M_a = float(np.sqrt(np.sum(np.max(np.abs(a), axis=1) ** 2)))
    # d[i, j] = d a_i / d x_j; the L^n term is a_j d a_i / d x_j
    M_p = float(np.sqrt(sum(_ln_norm(a[j] * d[i, j], grid) ** 2
                            for i in range(n) for j in range(n))))
    M_pp = float(np.sqrt(np.sum(np.max(np.abs(d), axis=2) ** 2)))
    C_S = sobolev_constant(n)
    margin = m_a ** 2 - C_S * M_p if np.isfinite(C_S) else float("nan")
    case1 = bool(np.isfinite(margin) and margin > 0)
    separable = fld.structure in ("constant", "separable")
    K1 = M_a / np.sqrt(margin) if case1 else float("inf")
    K2 = 1.0 if separable else float("inf")
    case = {(True, True): "both", (True, False): "I", (False, True): "II",
            (False, False): "neither"}[(case1, separable)]
    K = min(K1, K2)
    omega = float(np.arctan(np.sqrt(max(K * K - 1.0, 0.0)))) if np.isfinite(K) else float("nan")
    bounds = CoefficientBounds(m_a, M_a, M_p, M_pp, C_S, float(K), float(K1), float(K2), case,
                               omega, float(margin), separable, fld.fd_derivatives)
    if case == "neither" and raise_on_failure:
        raise CaseIFailed(f"m_a^2 - C_S M_a' = {margin:.4g} is not positive and the field is "
                          "not separable", margin)
    return bounds


# ---- operators -------------------------------------------------------------

def _blade(i: int) -> int:
    return 1 << (i - 1)


def build_gradient(fld: CoefficientField) -> CliffordMatrix:
    """sum_i e_i diag(a_i) D_i as a sparse Clifford matrix."""
    grid = fld.grid
    blocks = {_blade(i): (sp.diags(fld.samples[i - 1]) @ difference(grid, i)).tocsr()
              for i in range(1, grid.n + 1)}
    return CliffordMatrix(grid.n, grid.N, blocks)


def _commutators(fld: CoefficientField):
    """C[i][j] = [D_i, diag(a_j)], the discrete stand-in for d a_j / d x_i."""
    grid = fld.grid
    D = [difference(grid, i) for i in range(1, grid.n + 1)]
    A = [sp.diags(fld.samples[j]) for j in range(grid.n)]
    C = [[(D[i] @ A[j] - A[j] @ D[i]).tocsr() for j in range(grid.n)] for i in range(grid.n)]
    return D, A, C


def build_gradient_squared(fld: CoefficientField) -> RealRep:
    """sum_ij e_i e_j a_i (d_i a_j) d_j u - sum_i a_i^2 d_i^2 u, assembled directly.

    The coefficient derivative d_i a_j is realized as the commutator
    [D_i, diag(a_j)], which makes the assembly coincide with the square of
    :func:`build_gradient`.
    """
    grid = fld.grid
    n = grid.n
    D, A, C = _commutators(fld)
    index, sign = product_table(n)
    blocks: dict[int, object] = {}

    def add(mask: int, block):
        blocks[mask] = blocks[mask] + block if mask in blocks else block

    for i in range(n):
        add(0, -(A[i] @ A[i] @ D[i] @ D[i]))
        for j in range(n):
            if C[i][j].nnz == 0:
                continue
            a, b = _blade(i + 1), _blade(j + 1)
            add(int(index[a, b]), sign[a, b] * (A[i] @ C[i][j] @ D[j]))
    return CliffordMatrix(n, grid.N, {k: v.tocsr() for k, v in blocks.items()}).real_representation()


@dataclass
class BField:
    """Pointwise B_i(x) = sum_j e_j a_j d a_i / d x_j, shape (n, N, 2**n)."""

    n: int
    values: np.ndarray

    @classmethod
    def from_field(cls, fld: CoefficientField) -> BField:
        n, N = fld.grid.n, fld.grid.N
        vals = np.zeros((n, N, 1 << n))
        for i in range(n):
            for j in range(n):
                vals[i, :, _blade(j + 1)] = fld.samples[j] * fld.derivatives[i, j]
        return cls(n, vals)

    def conj(self) -> np.ndarray:
        from .clifford import _grade_signs
        return self.values * _grade_signs(self.n)[0][None, None, :]


# ---- inner products and the form q_s ----------------------------------------

def _left(n: int, c: Multivector, v: np.ndarray) -> np.ndarray:
    return v @ left_matrix(n, c.coeffs).T


def clifford_inner(u: np.ndarray, v: np.ndarray, grid: GridSpec) -> Multivector:
    """<u, v> = h^n sum_x conj(u(x)) v(x) as an element of R_n."""
    from .clifford import _grade_signs
    n = grid.n
    ubar = u * _grade_signs(n)[0][None, :]
    G = ubar.T @ v
    index, sign = product_table(n)
    out = np.bincount(index.ravel(), weights=(sign * G).ravel(), minlength=1 << n)
    return Multivector(n, grid.cell * out)


def l2_norm(u: np.ndarray, grid: GridSpec) -> float:
    return float(np.sqrt(grid.cell * np.sum(np.asarray(u) ** 2)))


def d_norm(u: np.ndarray, grid: GridSpec) -> float:
    """||u||_D = (sum_j ||D_j u||^2)^(1/2)."""
    return float(np.sqrt(sum(l2_norm(difference(grid, j) @ u, grid) ** 2
                             for j in range(1, grid.n + 1))))


def sesquilinear_form_qs(u: np.ndarray, v: np.ndarray, s: Paravector,
                         fld: CoefficientField) -> Multivector:
    """q_s(u,v) = sum_i <d_i u, a_i^2 d_i v + (2 s0 a_i - B_i) e_i v> + |s|^2 <u,v>.

    B_i e_i v is applied as the operator sum_j e_j e_i (a_j d_j a_i) v with the
    coefficient derivative in commutator form, so the identity
    q_s(u, v) = <Q_s[nabla_a] u, v> holds to rounding.
    """
    grid = fld.grid
    n = grid.n
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    D, A, C = _commutators(fld)
    total = s.abs2() * clifford_inner(u, v, grid)
    for i in range(n):
        ei = Multivector.e(n, i + 1)
        w = A[i] @ (A[i] @ (D[i] @ v)) + 2.0 * s.s0 * _left(n, ei, A[i] @ v)
        # minus B_i e_i v
        w = w + A[i] @ (C[i][i] @ v)
        for j in range(n):
            if j != i and C[j][i].nnz:
                w = w + _left(n, ei * Multivector.e(n, j + 1), C[j][i] @ (A[j] @ v))
        total = total + clifford_inner(D[i] @ u, w, grid)
    return total


# ---- case II change of variables --------------------------------------------

@dataclass
class Case2Report:
    periods: np.ndarray
    grid: GridSpec
    low_modes_x: np.ndarray
    low_modes_y: np.ndarray
    rel_diff: float


def case2_transform(fld: CoefficientField, n_modes: int = 4) -> Case2Report:
    """Periods L_i' = int_0^L du / a_i(u) of the straightened coordinates.

    The periodic trapezoid rule on the grid samples is spectrally accurate.
    The report compares the smallest positive points of the discrete
    S-spectrum of nabla_a with those of the unit-coefficient gradient on the
    straightened grid; the two agree up to the O(h^2) stencil error.
    """
    if fld.structure not in ("constant", "separable"):
        raise NotSeparable("case II change of variables needs a_i = a_i(x_i)")
    grid = fld.grid
    n, m = grid.n, grid.m
    periods = np.empty(n)
    for i in range(n):
        line = fld.samples[i].reshape(grid.shape)[(0,) * i + (slice(None),) + (0,) * (n - i - 1)]
        periods[i] = grid.h * np.sum(1.0 / line)
    # x-grid spectrum: nabla_a is self-adjoint for the weight 1/prod a_i
    R = build_gradient(fld).real_representation().dense()
    w = np.repeat(1.0 / np.prod(fld.samples, axis=0), 1 << n)
    S = np.sqrt(w)[:, None] * R / np.sqrt(w)[None, :]
    ex = np.linalg.eigvalsh(0.5 * (S + S.T))
    # straightened grid: spacing L_i'/m, i.e. the unit gradient scaled by L/L_i'
    flat = CoefficientField.constant(grid, grid.L / periods)
    ey = np.linalg.eigvalsh(build_gradient(flat).real_representation().dense())
    # compare with multiplicity: variable coefficients split degenerate pairs slightly
    tol = 1e-9 * max(np.abs(ex).max(), 1.0)
    px, py = np.sort(ex[ex > tol]), np.sort(ey[ey > tol])
    k = min(n_modes * (1 << n), len(px), len(py))
    px, py = px[:k], py[:k]
    rel = float(np.max(np.abs(px - py) / py)) if k else 0.0
    return Case2Report(periods, GridSpec(n, m, float(periods.mean())), px, py, rel)


# ---- weak solve and the explicit bounds --------------------------------------

@dataclass
class WeakSolveReport:
    residual: float
    norm_u: float
    norm_D: float
    norm_f: float
    bound_L2: float
    bound_D: float
    holds_L2: bool
    holds_D: bool


def _prefactor(b: CoefficientBounds, n: int) -> float:
    return (b.M_a / (b.m_a * np.sqrt(n))) ** (n / 2)


def weak_solve_bounds(s: Paravector, b: CoefficientBounds, n: int, norm_f: float):
    denom = s.abs2() - b.K_a ** 2 * s.s0 ** 2
    pre = _prefactor(b, n)
    return pre * norm_f / denom, pre * b.K_a * s.abs() * norm_f / (b.m_a * denom)


def resolvent_bound(s: Paravector, b: CoefficientBounds, n: int) -> float:
    """Explicit bound for |s| * ||S_L^{-1}(s, nabla_a)||."""
    denom = s.abs2() - b.K_a ** 2 * s.s0 ** 2
    return _prefactor(b, n) * (1.0 + b.M_a * b.K_a / b.m_a) * s.abs2() / denom


def sector_resolvent_constant(phi: float, b: CoefficientBounds, n: int) -> float:
    """C_phi bound valid outside the double sector D_phi."""
    t2 = np.tan(phi) ** 2
    if 1.0 + t2 <= b.K_a ** 2:
        return float("inf")
    return _prefactor(b, n) * (1.0 + b.M_a * b.K_a / b.m_a) * (1.0 + t2) / (1.0 + t2 - b.K_a ** 2)


def weak_solve(s: Paravector, f: np.ndarray, fld: CoefficientField,
               bounds: CoefficientBounds | None = None, T: RealRep | None = None,
               tol_spec: float = 1e-8):
    """u_f = Q_s[nabla_a]^{-1} f with the explicit a-priori bounds checked."""
    grid = fld.grid
    bounds = bounds or validate_assumptions(fld)
    if not s.abs() > bounds.K_a * abs(s.s0):
        raise OutsideSector(f"|s| = {s.abs():.4g} must exceed K_a |s0| = "
                            f"{bounds.K_a * abs(s.s0):.4g}")
    T = T if T is not None else build_gradient(fld).real_representation()
    f = np.asarray(f, dtype=float).reshape(grid.N, grid.blades)
    u, rep = pseudo_resolvent_solve(T, s, f, tol_spec=tol_spec)
    Q = pseudo_resolvent(T, s)
    res = float(np.linalg.norm(Q.matrix @ u.reshape(-1) - f.reshape(-1))
                / max(np.linalg.norm(f), 1e-300))
    nu, nD, nf = l2_norm(u, grid), d_norm(u, grid), l2_norm(f, grid)
    bL2, bD = weak_solve_bounds(s, bounds, grid.n, nf)
    slack = 1e-12 * max(bL2, 1e-300)
    return u, WeakSolveReport(res, nu, nD, nf, bL2, bD, nu <= bL2 + slack,
                              nD <= bD + 1e-12 * max(bD, 1e-300))
