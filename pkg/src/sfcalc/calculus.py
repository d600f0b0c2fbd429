"""Contour-integral functional calculus on Clifford-module operators.

Three tiers are provided:

* ``omega_calculus`` for intrinsic functions decaying at 0 and at infinity,
  ``f(T) = 1/(2 pi) int S_L^{-1}(s,T) ds_J f(s)`` over the boundary of a
  double sector in one slice plane, with ``ds_J = -J ds``;
* ``extended_calculus`` for functions with limits at 0 and infinity;
* ``hinfty_calculus`` for polynomially growing functions through a
  regularizer, ``f(T) = e(T)^{-1} (e f)(T)``.

Module elements are vectorized as in :mod:`sfcalc.operators`. Every routine
accepts an optional block ``X`` of shape ``(dim, k)``; without it the result
is materialized as a dense :class:`RealRep` by pushing the identity through
the quadrature.

Quadrature is done in ``t = ln r`` on each ray. The default rule is the
trapezoid rule, which converges geometrically for these integrands and whose
node sets are nested under step halving; composite Gauss-Legendre is
available through ``ContourSpec(rule="gauss-legendre")``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .clifford import (
    IntrinsicSliceFunction,
    Multivector,
    Paravector,
    e_unit,
    injective_regularizer,
    p_power,
    positive_regularizer,
    q_power,
)
from .errors import (
    DomainError,
    NotConverged,
    NotInjective,
    RegularizerSingular,
    SingularAtS,
)
from .operators import (
    RealRep,
    ShiftedFactor,
    as_rep,
    bordered_solve,
    left_scalar_block,
    sigma_min,
)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ContourSpec:
    """Quadrature description of the sector boundary in the slice plane C_J.

    ``kind="double"`` traverses the four rays of the double sector D_phi:
    inward along r e^{J phi}, outward along r e^{-J phi}, inward along
    r e^{J(pi+phi)} and outward along r e^{J(pi-phi)}. ``kind="single"``
    keeps only the two rays around the positive axis (sectorial case).
    ``eps``/``R`` left as ``None`` are chosen from the operator scales and
    the decay of the integrands.
    """

    phi: float = np.pi / 4
    J: Paravector | None = None
    eps: float | None = None
    R: float | None = None
    nodes_per_ray: int = 32
    tol_quad: float = 1e-9
    max_doublings: int = 6
    rule: str = "trapezoid"
    kind: str = "double"
    paired: bool = True
    threads: int = 1
    check_singular: bool = True

    def __post_init__(self):
        if self.rule not in ("trapezoid", "gauss-legendre"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.kind not in ("double", "single"):
            raise ValueError(f"unknown contour kind {self.kind!r}")
        upper = np.pi / 2 if self.kind == "double" else np.pi
        if not 0 < self.phi < upper:
            raise ValueError(f"contour angle {self.phi} outside (0, {upper})")
        if self.nodes_per_ray < 2:
            raise ValueError("need at least two nodes per ray")

    def rays(self) -> list[tuple[float, int]]:
        """(angle, direction) pairs; direction -1 means traversed from R to eps."""
        p = self.phi
        if self.kind == "single":
            return [(p, -1), (-p, +1)]
        return [(p, -1), (-p, +1), (np.pi + p, -1), (np.pi - p, +1)]

    def slice_unit(self, n: int) -> Paravector:
        J = self.J if self.J is not None else e_unit(n, 1)
        if J.n != n or abs(J.s0) > 1e-14 or abs(J.abs() - 1.0) > 1e-12:
            raise ValueError("slice unit must be a unit imaginary paravector of matching dimension")
        return J


@dataclass
class QuadReport:
    eps: float
    R: float
    levels: int
    nodes_per_ray: int
    diffs: list[float]
    tail_zero: float
    tail_infinity: float
    kernel_dim: int


# ---- node evaluation ---------------------------------------------------------

def _as_block(R: RealRep, X) -> tuple[np.ndarray, bool]:
    if X is None:
        return np.eye(R.dim), True
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != R.dim:
        raise ValueError(f"block has {X.shape[0]} rows, operator dimension is {R.dim}")
    return X, False


def _f_values(fs, z: complex) -> np.ndarray:
    vals = np.array([complex(f(np.array([z]))[0]) for f in fs])
    if not np.all(np.isfinite(vals)):
        bad = [f.name for f, v in zip(fs, vals) if not np.isfinite(v)]
        raise DomainError(f"{bad} not finite at contour node {z}")
    return vals


class _Integrator:
    """Accumulates the contour sums for several functions at once."""

    def __init__(self, R: RealRep, X: np.ndarray, fs, contour: ContourSpec,
                 scale_hi: float):
        self.R = R
        self.X = X
        self.fs = list(fs)
        self.c = contour
        self.scale_hi = scale_hi
        self.LJX = None
        if not contour.paired:
            J = contour.slice_unit(R.n)
            self.LJX = left_scalar_block(R.n, J.to_multivector(), X)

    def _solve(self, factor: ShiftedFactor, rhs: np.ndarray) -> np.ndarray:
        z = factor.z
        W = factor.solve(rhs.astype(complex))
        Y = W.imag / z.imag
        if not np.all(np.isfinite(Y)):
            raise SingularAtS(f"contour node s0={z.real:.3e}, |s|={abs(z):.3e} hits the spectrum")
        if self.c.check_singular:
            # |Q^{-1}| >= |Y|/|rhs|; compare against the spectrum threshold
            growth = np.linalg.norm(Y) / max(np.linalg.norm(rhs), 1e-300)
            floor = 1e-10 * max(self.scale_hi, abs(z)) ** 2
            if growth * floor > 1.0:
                raise SingularAtS(f"contour node s0={z.real:.3e}, |s|={abs(z):.3e} "
                                  "is numerically in the S-spectrum")
        return Y

    def node(self, t: float):
        """Unweighted integrand sums (A, B) for every function at log-radius t."""
        r = np.exp(t)
        k = len(self.fs)
        A = [0.0] * k
        B = [0.0] * k
        groups: dict[int, list] = {}
        for theta, direction in self.c.rays():
            if self.c.paired and np.sin(theta) < 0:
                continue
            side = 1 if np.cos(theta) > 0 else -1
            groups.setdefault(side, []).append((theta, direction))
        for side, rays in groups.items():
            theta0 = rays[0][0]
            s0 = r * np.cos(theta0)
            y = abs(r * np.sin(theta0))
            factor = ShiftedFactor(self.R.matrix, complex(s0, y))
            Y1 = self._solve(factor, self.X)
            Y2 = None if self.c.paired else self._solve(factor, self.LJX)
            for theta, direction in rays:
                z = r * np.exp(1j * theta)
                cs = -1j * direction * z * _f_values(self.fs, z)
                zc = np.conj(z) * cs
                for i in range(k):
                    if self.c.paired:
                        A[i] = A[i] + 2.0 * zc[i].real * Y1
                        B[i] = B[i] + 2.0 * cs[i].real * Y1
                    else:
                        A[i] = A[i] + zc[i].real * Y1 + zc[i].imag * Y2
                        B[i] = B[i] + cs[i].real * Y1 + cs[i].imag * Y2
        return A, B

    def combine(self, A, B):
        return [(a - self.R.matrix @ b) / TWO_PI for a, b in zip(A, B)]


def _map_nodes(integ: _Integrator, ts, weights, threads: int):
    k = len(integ.fs)
    A = [np.zeros_like(integ.X) for _ in range(k)]
    B = [np.zeros_like(integ.X) for _ in range(k)]
    if threads > 1:
        pool = ThreadPoolExecutor(max_workers=threads)
        results = pool.map(integ.node, ts)
    else:
        pool = None
        results = map(integ.node, ts)
    try:
        for w, (a, b) in zip(weights, results):
            for i in range(k):
                A[i] += w * a[i]
                B[i] += w * b[i]
    finally:
        if pool is not None:
            pool.shutdown()
    return A, B


def _gauss_legendre_nodes(a: float, b: float, panels: int, order: int = 8):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    ts, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        ts.append(lo + half * (x + 1.0))
        ws.append(half * w)
    return np.concatenate(ts), np.concatenate(ws)


def _rel_diff(new, old) -> float:
    num = max(np.linalg.norm(a - b) for a, b in zip(new, old))
    den = max(max(np.linalg.norm(a) for a in new), 1e-300)
    return num / den


def _choose_truncation(fs, contour: ContourSpec, lo: float, hi: float):
    """Pick eps and R so that the neglected tails are below tol_quad/100.

    Near 0 the integrand is bounded by |f(s)|/lo (resolvent off the kernel),
    near infinity by |f(s)|/|s|. The tails are estimated from the decay of f
    along the rays and the truncation radii are pushed out until they pass.
    """
    angles = [theta for theta, _ in contour.rays()]

    def fmax(r: float) -> float:
        return max(abs(v) for th in angles for v in _f_values(fs, r * np.exp(1j * th)))

    probe = np.geomspace(lo, hi, 9) if hi > lo else np.array([lo])
    F = max(max(fmax(r) for r in probe), 1e-300)
    target = 1e-2 * contour.tol_quad * F

    eps = contour.eps if contour.eps is not None else 1e-1 * lo
    if contour.eps is None:
        while eps * fmax(eps) / lo > target and eps > 1e-30 * lo:
            eps /= 10.0
    if fmax(eps * 1e-3) > 0.5 * fmax(eps) and fmax(eps) > target:
        raise DomainError("integrand does not decay at 0; use the extended calculus")
    tail0 = eps * fmax(eps) / lo

    Rr = contour.R if contour.R is not None else 10.0 * hi
    fr, f10 = fmax(Rr), fmax(10 * Rr)
    if f10 > 0.5 * fr and fr > target:
        raise DomainError("integrand does not decay at infinity; use a regularizer")

    def tail_inf(r: float) -> float:
        a, b = fmax(r), fmax(10 * r)
        if a == 0:
            return 0.0
        gamma = np.log10(a / b) if b > 0 else 16.0
        return a / max(gamma * np.log(10.0), 1e-3)

    if contour.R is None:
        while tail_inf(Rr) > target and Rr < 1e30 * hi:
            Rr *= 10.0
    return eps, Rr, tail0, tail_inf(Rr)


def _converged(diffs: list[float], tol: float) -> bool:
    """Successive change below tol, or the geometric extrapolation of it.

    Once the rule is in its geometric regime the error of the finer level is
    about diff_k^2 / diff_{k-1}, far below diff_k itself.
    """
    if diffs[-1] < tol:
        return True
    if len(diffs) >= 2 and diffs[-2] > 0:
        ratio = diffs[-1] / diffs[-2]
        return ratio < 1e-2 and diffs[-1] * ratio < 0.1 * tol
    return False


def _scales(R: RealRep, contour: ContourSpec):
    data = R.spectral_data()
    hi = max(data.norm, 1e-300)
    lo = data.sigma_lo if data.sigma_lo > 0 else hi
    return data, lo, hi


def _integrate(R: RealRep, fs, contour: ContourSpec, X: np.ndarray, lo: float, hi: float,
               kernel_dim: int):
    eps, Rr, tail0, tailinf = _choose_truncation(fs, contour, lo, hi)
    a, b = np.log(eps), np.log(Rr)
    integ = _Integrator(R, X, fs, contour, hi)
    diffs: list[float] = []
    prev = None
    if contour.rule == "trapezoid":
        M = contour.nodes_per_ray
        ts = np.linspace(a, b, M + 1)
        w = np.ones(M + 1)
        w[0] = w[-1] = 0.5
        A, B = _map_nodes(integ, ts, w, contour.threads)
        for level in range(contour.max_doublings + 1):
            h = (b - a) / M
            est = integ.combine([h * x for x in A], [h * x for x in B])
            if prev is not None:
                diffs.append(_rel_diff(est, prev))
                if _converged(diffs, contour.tol_quad):
                    return est, QuadReport(eps, Rr, level, M, diffs, tail0, tailinf, kernel_dim)
            if level == contour.max_doublings:
                break
            prev = est
            new_ts = a + (np.arange(M) + 0.5) * h
            A2, B2 = _map_nodes(integ, new_ts, np.ones(M), contour.threads)
            A = [x + y for x, y in zip(A, A2)]
            B = [x + y for x, y in zip(B, B2)]
            M *= 2
    else:
        panels = max(1, contour.nodes_per_ray // 8)
        for level in range(contour.max_doublings + 1):
            ts, ws = _gauss_legendre_nodes(a, b, panels)
            A, B = _map_nodes(integ, ts, ws, contour.threads)
            est = integ.combine(A, B)
            if prev is not None:
                diffs.append(_rel_diff(est, prev))
                if _converged(diffs, contour.tol_quad):
                    return est, QuadReport(eps, Rr, level, 8 * panels, diffs, tail0, tailinf,
                                           kernel_dim)
            prev = est
            panels *= 2
    raise NotConverged(f"quadrature did not converge after {contour.max_doublings} doublings "
                       f"(last relative change {diffs[-1]:.2e})")


def omega_calculus_many(fs: Sequence[IntrinsicSliceFunction], T, contour: ContourSpec | None = None,
                        X=None):
    """Evaluate several decaying intrinsic functions of T on one block.

    Returns ``(results, report)`` where each result is an array of the shape
    of ``X`` (or the materialized dense matrix). The functions share every
    factorization. Components in the kernel of T are mapped to zero, which is
    exact for functions vanishing at the origin.
    """
    contour = contour or ContourSpec()
    R = as_rep(T)
    if contour.J is not None or not contour.paired:
        contour.slice_unit(R.n)
    Xb, _ = _as_block(R, X)
    data, lo, hi = _scales(R, contour)
    Xoff = data.project_off(Xb)
    outs, report = _integrate(R, fs, contour, Xoff, lo, hi, data.kernel_dim)
    return [data.project_off(o) for o in outs], report


def _wrap(R: RealRep, Y: np.ndarray, X):
    if X is None:
        return R.like(Y)
    return Y.reshape(np.shape(X)) if np.ndim(X) == 1 else Y


def omega_calculus(f: IntrinsicSliceFunction, T, contour: ContourSpec | None = None, X=None):
    R = as_rep(T)
    (Y,), _ = omega_calculus_many([f], R, contour, X)
    return _wrap(R, Y, X)


# ---- extended calculus -------------------------------------------------------

def _as_const(n: int, c) -> Multivector:
    if isinstance(c, Multivector):
        return c
    return Multivector.scalar(n, float(c))


@dataclass(frozen=True)
class DecomposedFunction:
    """f = f_inf + (1+s^2)^{-1}(f_0 - f_inf) + f_tilde."""

    f_inf: float | Multivector
    f_0: float | Multivector
    f_tilde: IntrinsicSliceFunction | None = None

    def value(self, z) -> np.ndarray:
        """Pointwise value for real constants (complex slice representative)."""
        finf = float(self.f_inf) if not isinstance(self.f_inf, Multivector) else self.f_inf.scalar_part()
        f0 = float(self.f_0) if not isinstance(self.f_0, Multivector) else self.f_0.scalar_part()
        z = np.asarray(z, dtype=complex)
        out = finf + (f0 - finf) / (1.0 + z * z)
        if self.f_tilde is not None:
            out = out + self.f_tilde(z)
        return out


def decompose(f: IntrinsicSliceFunction, phi: float = np.pi / 4, tol: float = 1e-8) -> DecomposedFunction:
    """Numerically split f into its limits at 0 and infinity and a decaying rest.

    Each limit is probed on the four contour directions at two radii eight
    decades apart. Power-law decay towards the end point gives limit 0; a
    value that settles and agrees across directions gives a constant limit.
    """
    dirs = np.exp(1j * np.array([phi, -phi, np.pi + phi, np.pi - phi]))

    def sample(r: float) -> np.ndarray:
        return np.array([complex(f(np.array([r * d]))[0]) for d in dirs])

    def limit(r1: float, r2: float, where: str) -> float:
        v1, v2 = sample(r1), sample(r2)
        if not (np.all(np.isfinite(v1)) and np.all(np.isfinite(v2))):
            raise DomainError(f"{f.name} is not finite near {where}")
        a1, a2 = np.max(np.abs(v1)), np.max(np.abs(v2))
        if a2 <= tol or (a2 < a1 and np.log(a1 / a2) / np.log(1e8) > 0.02):
            return 0.0
        spread = max(np.ptp(v2.real), np.max(np.abs(v2.imag)), np.max(np.abs(v1 - v2)))
        if spread > 1e-6 * max(1.0, a2):
            raise DomainError(f"{f.name} has no limit at {where}")
        return float(v2.real.mean())

    f0 = limit(1e-8, 1e-16, "0")
    finf = limit(1e8, 1e16, "infinity")
    if f0 == 0.0 and finf == 0.0:
        return DecomposedFunction(0.0, 0.0, f)
    rest = IntrinsicSliceFunction(
        lambda z: f(z) - finf - (f0 - finf) / (1.0 + z * z), f"{f.name}~", f.nonzero_scalar, True)
    return DecomposedFunction(finf, f0, rest)


def _one_plus_square_solve(R: RealRep, Y: np.ndarray) -> np.ndarray:
    M = R.squared().shifted(1.0)
    if M.is_sparse:
        import scipy.sparse.linalg as spla
        return spla.splu(sp.csc_matrix(M.matrix)).solve(Y)
    return np.linalg.solve(M.matrix, Y)


def extended_calculus_many(fs: Sequence[DecomposedFunction], T, contour: ContourSpec | None = None,
                           X=None):
    R = as_rep(T)
    Xb, _ = _as_block(R, X)
    tildes = [(i, f.f_tilde) for i, f in enumerate(fs) if f.f_tilde is not None]
    rest = {}
    report = None
    if tildes:
        outs, report = omega_calculus_many([t for _, t in tildes], R, contour, Xb)
        rest = {i: o for (i, _), o in zip(tildes, outs)}
    results = []
    for i, f in enumerate(fs):
        finf = _as_const(R.n, f.f_inf)
        diff = _as_const(R.n, f.f_0) - finf
        out = np.zeros_like(Xb)
        if finf.norm() > 0:
            out = out + left_scalar_block(R.n, finf, Xb)
        if diff.norm() > 0:
            out = out + _one_plus_square_solve(R, left_scalar_block(R.n, diff, Xb))
        if i in rest:
            out = out + rest[i]
        results.append(out)
    return results, report


def extended_calculus(f: DecomposedFunction, T, contour: ContourSpec | None = None, X=None):
    R = as_rep(T)
    (Y,), _ = extended_calculus_many([f], R, contour, X)
    return _wrap(R, Y, X)


# ---- H-infinity calculus ------------------------------------------------------

@dataclass(frozen=True)
class Regularizer:
    kind: str  # "positive" or "injective"
    order: int

    def __post_init__(self):
        if self.kind not in ("positive", "injective"):
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.order < 1:
            raise ValueError("regularizer order must be a positive integer")

    def function(self) -> IntrinsicSliceFunction:
        if self.kind == "positive":
            return positive_regularizer(self.order)
        return injective_regularizer(self.order)

    def admits(self, alpha: float) -> bool:
        if self.kind == "positive":
            return self.order > alpha / 2
        return self.order > abs(alpha)

    @classmethod
    def for_power(cls, alpha: float) -> Regularizer:
        """Default choice with at least two orders of decay to spare."""
        if alpha > 0:
            return cls("positive", int(np.ceil(alpha / 2 + 1)))
        return cls("injective", int(np.floor(abs(alpha))) + 2)


def _check_positive_regularizer(R: RealRep):
    if "one_plus_square_ok" not in R._cache:
        M = R.squared().shifted(1.0)
        smin = sigma_min(M.matrix)
        R._cache["one_plus_square_ok"] = smin > 1e-10 * (1.0 + R.norm() ** 2)
    if not R._cache["one_plus_square_ok"]:
        raise RegularizerSingular("1 + T^2 is singular: +-J lies in the S-spectrum")


def _apply_inverse_regularizer(R: RealRep, e: Regularizer, Y: np.ndarray) -> np.ndarray:
    M = R.squared().shifted(1.0).matrix
    for _ in range(e.order):
        Y = M @ Y
    if e.kind == "injective":
        for _ in range(e.order):
            Y = bordered_solve(R, Y)
    return Y


def hinfty_calculus_many(items: Sequence[tuple[IntrinsicSliceFunction, Regularizer]], T,
                         contour: ContourSpec | None = None, X=None, off_kernel: bool = False):
    """f(T) = e(T)^{-1} (e f)(T) for several (f, e) pairs sharing one quadrature.

    Injective regularizers need T injective; with ``off_kernel=True`` the
    computation is restricted to the complement of the kernel and the
    result vanishes on the kernel.
    """
    contour = contour or ContourSpec()
    R = as_rep(T)
    Xb, _ = _as_block(R, X)
    data = R.spectral_data()
    phi = contour.phi
    decomposed = []
    for f, e in items:
        if e.kind == "injective" and data.kernel_dim and not off_kernel:
            raise RegularizerSingular(
                f"e(T) = T^{e.order}(1+T^2)^-{e.order} is not injective: T has a "
                f"{data.kernel_dim}-dimensional kernel")
        if e.kind == "positive":
            _check_positive_regularizer(R)
        decomposed.append(decompose(e.function() * f, phi))
    Xin = data.project_off(Xb) if off_kernel else Xb
    outs, report = extended_calculus_many(decomposed, R, contour, Xin)
    results = []
    for (f, e), Y in zip(items, outs):
        Z = _apply_inverse_regularizer(R, e, Y)
        results.append(data.project_off(Z) if off_kernel else Z)
    return results, report


def hinfty_calculus(f: IntrinsicSliceFunction, e: Regularizer, T, contour: ContourSpec | None = None,
                    X=None, off_kernel: bool = False):
    R = as_rep(T)
    (Y,), _ = hinfty_calculus_many([(f, e)], R, contour, X, off_kernel)
    return _wrap(R, Y, X)


# ---- fractional powers -----------------------------------------------------

def _integer_power(R: RealRep, k: int, Xb: np.ndarray) -> np.ndarray:
    Y = Xb
    if k >= 0:
        for _ in range(k):
            Y = R.matrix @ Y
        return Y
    for _ in range(-k):
        Y = bordered_solve(R, Y)
    return Y


def _exact_integer(kind: str, alpha: float) -> int | None:
    """Exponents where p/q reduce to plain powers of T."""
    if float(alpha).is_integer():
        k = int(alpha)
        if kind == "p" and k % 2 != 0:
            return k
        if kind == "q" and k % 2 == 0 and k >= 0:
            return k
    return None


def frac_powers(T, requests: Sequence[tuple[str, float]], contour: ContourSpec | None = None,
                X=None, off_kernel: bool = False, exact_integers: bool = True,
                regularizers: Sequence[Regularizer] | None = None):
    """Several p_alpha(T)/q_alpha(T) at once; ``requests`` holds ("p"|"q", alpha).

    Returns ``(results, report)``. Exponents alpha <= 0 need T injective or
    ``off_kernel=True``.
    """
    R = as_rep(T)
    Xb, _ = _as_block(R, X)
    data = R.spectral_data()
    results: list = [None] * len(requests)
    pending = []
    for idx, (kind, alpha) in enumerate(requests):
        if kind not in ("p", "q"):
            raise ValueError(f"unknown power kind {kind!r}")
        if alpha <= 0 and data.kernel_dim and not off_kernel:
            raise NotInjective(f"{kind}_{alpha} needs an injective operator; T has a "
                               f"{data.kernel_dim}-dimensional kernel")
        k = _exact_integer(kind, alpha) if exact_integers else None
        if k is not None:
            results[idx] = _integer_power(R, k, Xb)
            continue
        f = p_power(alpha) if kind == "p" else q_power(alpha)
        e = regularizers[idx] if regularizers is not None else Regularizer.for_power(alpha)
        if not e.admits(alpha):
            raise ValueError(f"regularizer {e} too weak for alpha = {alpha}")
        pending.append((idx, f, e))
    report = None
    if pending:
        outs, report = hinfty_calculus_many([(f, e) for _, f, e in pending], R, contour, Xb,
                                            off_kernel)
        for (idx, _, _), Y in zip(pending, outs):
            results[idx] = Y
    if off_kernel:
        results = [data.project_off(Y) for Y in results]
    return results, report


def frac_power_p_op(T, alpha: float, contour: ContourSpec | None = None, X=None,
                    off_kernel: bool = False, regularizer: Regularizer | None = None):
    R = as_rep(T)
    (Y,), _ = frac_powers(R, [("p", alpha)], contour, X, off_kernel,
                          regularizers=None if regularizer is None else [regularizer])
    return _wrap(R, Y, X)


def frac_power_q_op(T, alpha: float, contour: ContourSpec | None = None, X=None,
                    off_kernel: bool = False, regularizer: Regularizer | None = None):
    R = as_rep(T)
    (Y,), _ = frac_powers(R, [("q", alpha)], contour, X, off_kernel,
                          regularizers=None if regularizer is None else [regularizer])
    return _wrap(R, Y, X)


def sign_op(T, contour: ContourSpec | None = None, X=None, off_kernel: bool = True):
    """sgn(T) = p_0(T) on the complement of the kernel."""
    return frac_power_p_op(T, 0.0, contour, X, off_kernel)


# ---- sectorial path for (T^2)^{alpha/2} ----------------------------------------

def sectorial_power_of_square(T, alpha: float, contour: ContourSpec | None = None, X=None,
                              off_kernel: bool = False):
    """(T^2)^{alpha/2} by the single-sector calculus of A = T^2."""
    R = as_rep(T)
    A = R.squared()
    data = R.spectral_data()
    # A has the same kernel as T (semisimple zero), so reuse its projector
    A._cache["spectral"] = _square_spectral(data)
    Y = sectorial_power(A, alpha / 2.0, contour, X, off_kernel)
    return Y if X is not None else R.like(Y.matrix)


def sectorial_power(A, beta: float, contour: ContourSpec | None = None, X=None,
                    off_kernel: bool = False):
    """A^beta for A with real non-negative spectrum and semisimple zero.

    The contour is the boundary of the sector |arg| < phi' (default
    phi' = pi/2) and the power uses the principal branch. The regularizer is
    (1+xi)^{-k} for beta > 0 and xi^k (1+xi)^{-2k} otherwise.
    """
    A = as_rep(A)
    Xb, _ = _as_block(A, X)
    data = A.spectral_data()
    if contour is None:
        contour = ContourSpec(phi=np.pi / 2, kind="single")
    elif contour.kind != "single":
        contour = replace(contour, kind="single", phi=min(contour.phi, np.pi / 2))
    if beta > 0:
        k = int(np.ceil(beta + 1))
        ef = IntrinsicSliceFunction(lambda z: z ** beta * (1.0 + z) ** (-k), f"xi^{beta}/(1+xi)^{k}")
    else:
        if data.kernel_dim and not off_kernel:
            raise NotInjective("negative powers need an injective operator")
        k = int(np.floor(abs(beta))) + 2
        ef = IntrinsicSliceFunction(lambda z: z ** (beta + k) * (1.0 + z) ** (-2 * k),
                                    f"xi^{beta + k}/(1+xi)^{2 * k}")
    Xin = data.project_off(Xb)
    (Y,), _ = omega_calculus_many([ef], A, contour, Xin)
    M = A.shifted(1.0).matrix
    if beta > 0:
        for _ in range(k):
            Y = M @ Y
    else:
        for _ in range(2 * k):
            Y = M @ Y
        for _ in range(k):
            Y = bordered_solve(A, Y)
    Y = data.project_off(Y)
    return _wrap(A, Y, X)


def _square_spectral(data):
    from .operators import SpectralData
    return SpectralData(data.norm ** 2, data.sigma_lo ** 2, data.V, data.M, data.threshold ** 2)


# ---- core approximants and closure rule ----------------------------------------

def core_approximant(T, n: float, m_tilde: int = 1, X=None):
    """r_n[T]^m = n^{2m} T^{2m} (T^2 + n^2)^{-m} (T^2 + 1/n^2)^{-m}."""
    R = as_rep(T)
    Xb, _ = _as_block(R, X)
    T2 = R.squared()
    Y = Xb
    for shift in (n * n, 1.0 / (n * n)):
        Ms = T2.shifted(shift)
        if Ms.is_sparse:
            import scipy.sparse.linalg as spla
            lu = spla.splu(sp.csc_matrix(Ms.matrix))
            solve = lu.solve
        else:
            import scipy.linalg as sla
            lu = sla.lu_factor(Ms.matrix)
            solve = lambda b, lu=lu: sla.lu_solve(lu, b)
        for _ in range(m_tilde):
            Y = solve(Y)
    for _ in range(m_tilde):
        Y = (n * n) * (T2.matrix @ Y)
    return _wrap(R, Y, X)


def mixed_power_via_core(T, alpha: float, n: float, m_tilde: int = 1, X=None,
                         contour: ContourSpec | None = None):
    """q_{alpha-1}(T) T r_n[T]^m X, the approximant of p_alpha(T) X."""
    R = as_rep(T)
    Xb, _ = _as_block(R, X)
    V = core_approximant(R, n, m_tilde, Xb)
    W = R.matrix @ V
    off = alpha - 1 <= 0
    (Y,), _ = frac_powers(R, [("q", alpha - 1)], contour, W, off_kernel=off)
    return _wrap(R, Y, X)


# ---- h_s for the spectral mapping check -----------------------------------------

def h_s_function(s: Paravector, alpha: float) -> DecomposedFunction:
    """h_s(xi) = 1/(p_alpha(xi)^2 - 2 s0 p_alpha(xi) + |s|^2) in decomposed form."""
    s0, a2 = s.s0, s.abs2()
    p = p_power(alpha)

    def h(z):
        w = p(z)
        return 1.0 / (w * w - 2.0 * s0 * w + a2)

    rest = IntrinsicSliceFunction(lambda z: h(z) - (1.0 / a2) / (1.0 + z * z), "h_s~", True, True)
    return DecomposedFunction(0.0, 1.0 / a2, rest)
