"""Operators on the finite Clifford module V = R_n^N.

A module element is stored as an array of shape ``(N, 2**n)``: row ``k`` holds
the multivector at position ``k``. Its vectorization is the row-major flatten,
so the real representation of an operator is a ``2**n N`` square matrix with
``2**n x 2**n`` blocks.
"""

from __future__ import annotations

import warnings

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize, minimize_scalar

from .clifford import (
    Multivector,
    Paravector,
    e_unit,
    left_matrix,
    product_table,
    right_matrix,
    slice_decompose,
)
from .errors import DimensionMismatch, NotInjective, SingularAtS

DENSE_LIMIT = 4096
KERNEL_RTOL = 1e-9
SPARSE_KERNEL_RTOL = 1e-6


def _is_sparse(a) -> bool:
    return sp.issparse(a)


class CliffordMatrix:
    """N x N matrix with entries in R_n, stored blade by blade.

    ``blocks[mask]`` is the real N x N matrix of coefficients of ``e_mask``,
    so ``T = sum_mask e_mask * blocks[mask]``. Blocks may be dense arrays or
    scipy sparse matrices.
    """

    def __init__(self, n: int, N: int, blocks: dict[int, object]):
        self.n = n
        self.N = N
        self.blocks = {}
        for mask, block in blocks.items():
            if not 0 <= mask < (1 << n):
                raise ValueError(f"blade mask {mask} out of range for n={n}")
            if block.shape != (N, N):
                raise DimensionMismatch(f"block for mask {mask} has shape {block.shape}")
            self.blocks[mask] = block

    @classmethod
    def from_entries(cls, entries: np.ndarray) -> CliffordMatrix:
        """Build from a dense ``(N, N, 2**n)`` coefficient array."""
        entries = np.asarray(entries, dtype=float)
        N, N2, dim = entries.shape
        if N != N2:
            raise DimensionMismatch("entry array must be square")
        n = dim.bit_length() - 1
        if 1 << n != dim:
            raise DimensionMismatch("last axis must have length 2**n")
        blocks = {m: entries[:, :, m].copy() for m in range(dim) if np.any(entries[:, :, m])}
        return cls(n, N, blocks)

    @classmethod
    def scalar(cls, n: int, N: int, c: float) -> CliffordMatrix:
        return cls(n, N, {0: c * np.eye(N)})

    @classmethod
    def identity(cls, n: int, N: int) -> CliffordMatrix:
        return cls.scalar(n, N, 1.0)

    @classmethod
    def left_multiplication(cls, a: Multivector, N: int = 1) -> CliffordMatrix:
        return cls(a.n, N, {m: c * np.eye(N) for m, c in enumerate(a.coeffs) if c != 0})

    @classmethod
    def real_matrix(cls, n: int, A) -> CliffordMatrix:
        """A real matrix acting blade-wise (entries times the identity blade)."""
        return cls(n, A.shape[0], {0: A})

    def entries(self) -> np.ndarray:
        out = np.zeros((self.N, self.N, 1 << self.n))
        for mask, block in self.blocks.items():
            out[:, :, mask] = block.toarray() if _is_sparse(block) else block
        return out

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.N, 1 << self.n):
            raise DimensionMismatch(f"expected module element of shape {(self.N, 1 << self.n)}")
        out = np.zeros_like(v)
        for mask, block in self.blocks.items():
            L = left_matrix(self.n, np.eye(1 << self.n)[mask])
            out += (block @ v) @ L.T
        return out

    def __matmul__(self, other: CliffordMatrix) -> CliffordMatrix:
        if (self.n, self.N) != (other.n, other.N):
            raise DimensionMismatch("operator shapes differ")
        index, sign = product_table(self.n)
        blocks: dict[int, object] = {}
        for a, A in self.blocks.items():
            for b, B in other.blocks.items():
                term = sign[a, b] * (A @ B)
                c = int(index[a, b])
                blocks[c] = blocks[c] + term if c in blocks else term
        return CliffordMatrix(self.n, self.N, blocks)

    def real_representation(self) -> RealRep:
        return real_representation(self)


@dataclass(eq=False)
class RealRep:
    """Real matrix image of an operator on R_n^N under the left-regular map."""

    matrix: object
    n: int
    N: int
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.matrix.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"matrix shape {self.matrix.shape} != {(self.dim, self.dim)}")
        if _is_sparse(self.matrix):
            self.matrix = sp.csr_matrix(self.matrix)

    @property
    def dim(self) -> int:
        return self.N << self.n

    @property
    def is_sparse(self) -> bool:
        return _is_sparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def like(self, matrix) -> RealRep:
        return RealRep(matrix, self.n, self.N)

    @classmethod
    def identity(cls, n: int, N: int, sparse: bool = False) -> RealRep:
        dim = N << n
        return cls(sp.identity(dim, format="csr") if sparse else np.eye(dim), n, N)

    def __matmul__(self, other):
        if isinstance(other, RealRep):
            return self.like(self.matrix @ other.matrix)
        return self.matrix @ other

    def __add__(self, other: RealRep) -> RealRep:
        return self.like(self.matrix + other.matrix)

    def __sub__(self, other: RealRep) -> RealRep:
        return self.like(self.matrix - other.matrix)

    def __mul__(self, c: float) -> RealRep:
        return self.like(self.matrix * c)

    __rmul__ = __mul__

    def shifted(self, c: float) -> RealRep:
        """self + c I."""
        eye = sp.identity(self.dim, format="csr") if self.is_sparse else np.eye(self.dim)
        return self.like(self.matrix + c * eye)

    def squared(self) -> RealRep:
        key = "square"
        if key not in self._cache:
            self._cache[key] = self.like(self.matrix @ self.matrix)
        return self._cache[key]

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Apply to a module element ``(N, 2**n)`` or a block ``(dim, k)``."""
        v = np.asarray(v)
        if v.shape == (self.N, 1 << self.n):
            return (self.matrix @ v.reshape(-1)).reshape(v.shape)
        return self.matrix @ v

    def norm(self) -> float:
        """Spectral norm (largest singular value)."""
        if "norm" not in self._cache:
            if self.dim <= DENSE_LIMIT and not self.is_sparse:
                self._cache["norm"] = float(np.linalg.norm(self.dense(), 2))
            elif self.dim <= 64:
                self._cache["norm"] = float(np.linalg.norm(self.dense(), 2))
            else:
                s = spla.svds(sp.csr_matrix(self.matrix), k=1, return_singular_vectors=False,
                              random_state=0)
                self._cache["norm"] = float(s[0])
        return self._cache["norm"]

    def spectral_data(self) -> SpectralData:
        if "spectral" not in self._cache:
            self._cache["spectral"] = spectral_data(self)
        return self._cache["spectral"]


def real_representation(T: CliffordMatrix) -> RealRep:
    dim = 1 << T.n
    sparse = any(_is_sparse(b) for b in T.blocks.values())
    total = None
    for mask, block in T.blocks.items():
        L = left_matrix(T.n, np.eye(dim)[mask])
        term = sp.kron(block, L, format="csr") if sparse else np.kron(block, L)
        total = term if total is None else total + term
    if total is None:
        total = sp.csr_matrix((T.N * dim, T.N * dim)) if sparse else np.zeros((T.N * dim,) * 2)
    return RealRep(total, T.n, T.N)


def as_rep(T) -> RealRep:
    if isinstance(T, RealRep):
        return T
    if isinstance(T, CliffordMatrix):
        return real_representation(T)
    raise TypeError(f"expected CliffordMatrix or RealRep, got {type(T).__name__}")


def vec(v: np.ndarray) -> np.ndarray:
    return np.asarray(v).reshape(-1)


def unvec(x: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(x).reshape(-1, 1 << n)


def left_scalar_block(n: int, c: Multivector | Paravector, X: np.ndarray) -> np.ndarray:
    """Multiply every module element in the block ``X`` by ``c`` from the left."""
    if isinstance(c, Paravector):
        c = c.to_multivector()
    L = left_matrix(n, c.coeffs)
    dim = 1 << n
    Y = X.reshape(-1, dim, *X.shape[1:])
    return np.einsum("ab,nb...->na...", L, Y).reshape(X.shape)


def right_scalar_block(n: int, c: Multivector | Paravector, X: np.ndarray) -> np.ndarray:
    if isinstance(c, Paravector):
        c = c.to_multivector()
    Rm = right_matrix(n, c.coeffs)
    dim = 1 << n
    Y = X.reshape(-1, dim, *X.shape[1:])
    return np.einsum("ab,nb...->na...", Rm, Y).reshape(X.shape)


def left_scalar_operator(n: int, N: int, c: Multivector | Paravector, sparse: bool = False):
    """Real matrix of v -> c v on R_n^N."""
    if isinstance(c, Paravector):
        c = c.to_multivector()
    L = left_matrix(n, c.coeffs)
    if sparse:
        return sp.kron(sp.identity(N), L, format="csr")
    return np.kron(np.eye(N), L)


# ---- shifted solves ---------------------------------------------------------

class ShiftedFactor:
    """LU factorization of ``A - z I`` for a real (dense or sparse) matrix A."""

    def __init__(self, A, z: complex):
        self.z = z
        if _is_sparse(A):
            M = (A - z * sp.identity(A.shape[0], format="csc")).tocsc()
            self._lu = spla.splu(M)
            self._solve = self._lu.solve
        else:
            M = np.asarray(A) - z * np.eye(A.shape[0])
            if not np.iscomplexobj(M):
                M = M.astype(float)
            with warnings.catch_warnings():
                # an exactly singular factor yields non-finite solves, reported as SingularAtS
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                self._lu = sla.lu_factor(M, check_finite=False)
            self._solve = lambda b: sla.lu_solve(self._lu, b, check_finite=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._solve(b)


def q_inverse_apply(R, s0: float, y: float, X: np.ndarray, factor: ShiftedFactor | None = None):
    """Q^{-1} X for Q = R^2 - 2 s0 R + (s0^2 + y^2), y > 0, real R and X.

    Q = (R - z)(R - conj z) with z = s0 + i y, hence
    Q^{-1} = Im((R - z)^{-1}) / y on real right-hand sides.
    """
    if factor is None:
        factor = ShiftedFactor(R, complex(s0, y))
    W = factor.solve(X.astype(complex))
    return W.imag / y


def pseudo_resolvent(T, s: Paravector) -> RealRep:
    R = as_rep(T)
    return R.squared() - 2.0 * s.s0 * R + R.like(s.abs2() * _eye_like(R))


def _eye_like(R: RealRep):
    return sp.identity(R.dim, format="csr") if R.is_sparse else np.eye(R.dim)


def _singular_threshold(R: RealRep, s: Paravector, tol: float) -> float:
    scale = max(R.norm(), s.abs(), 1e-300)
    return tol * scale ** 2


def sigma_min(Q) -> float:
    """Smallest singular value of a real matrix."""
    if _is_sparse(Q) and Q.shape[0] > 1024:
        try:
            lu = spla.splu(sp.csc_matrix(Q))
        except RuntimeError:
            return 0.0
        n = Q.shape[0]
        inv = spla.LinearOperator((n, n), matvec=lu.solve,
                                  rmatvec=lambda x: lu.solve(x, trans="T"), dtype=float)
        s = spla.svds(inv, k=1, return_singular_vectors=False, random_state=0)
        return 1.0 / float(s[0])
    dense = Q.toarray() if _is_sparse(Q) else np.asarray(Q)
    return float(sla.svdvals(dense, check_finite=False)[-1])


@dataclass
class SolveReport:
    residual: float
    sigma_min: float | None


def pseudo_resolvent_solve(T, s: Paravector, b: np.ndarray, tol_spec: float = 1e-8,
                           check_spectrum: bool = True):
    """Solve Q_s[T] u = b; return ``(u, SolveReport)``.

    ``b`` is a module element ``(N, 2**n)`` or a block ``(dim, k)``.
    """
    R = as_rep(T)
    Q = pseudo_resolvent(R, s)
    smin = None
    if check_spectrum:
        smin = sigma_min(Q.matrix)
        if smin <= _singular_threshold(R, s, tol_spec):
            raise SingularAtS(f"Q_s[T] singular at s = {s} (sigma_min = {smin:.3e})", s, smin)
    shape = np.shape(b)
    rhs = np.asarray(b, dtype=float).reshape(R.dim, -1)
    if Q.is_sparse:
        u = spla.splu(sp.csc_matrix(Q.matrix)).solve(rhs)
    else:
        u = sla.lu_solve(sla.lu_factor(Q.matrix, check_finite=False), rhs, check_finite=False)
    res = np.linalg.norm(Q.matrix @ u - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if not np.all(np.isfinite(u)):
        raise SingularAtS(f"Q_s[T] solve broke down at s = {s}", s, smin)
    return u.reshape(shape), SolveReport(float(res), smin)


def _q_inverse_dense(R: RealRep, s: Paravector, tol_spec: float) -> np.ndarray:
    Q = pseudo_resolvent(R, s).dense()
    smin = float(sla.svdvals(Q, check_finite=False)[-1])
    if smin <= _singular_threshold(R, s, tol_spec):
        raise SingularAtS(f"Q_s[T] singular at s = {s} (sigma_min = {smin:.3e})", s, smin)
    return np.linalg.inv(Q)


def s_resolvent_left(s: Paravector, T, tol_spec: float = 1e-8) -> RealRep:
    """S_L^{-1}(s,T) = Q_s^{-1} sbar - T Q_s^{-1} as a dense real matrix."""
    R = as_rep(T)
    Qi = _q_inverse_dense(R, s, tol_spec)
    Ls = left_scalar_operator(R.n, R.N, s.conj())
    return R.like(Qi @ Ls - R.matrix @ Qi)


def s_resolvent_right(s: Paravector, T, tol_spec: float = 1e-8) -> RealRep:
    """S_R^{-1}(s,T) = (sbar - T) Q_s^{-1} as a dense real matrix."""
    R = as_rep(T)
    Qi = _q_inverse_dense(R, s, tol_spec)
    Ls = left_scalar_operator(R.n, R.N, s.conj())
    return R.like(Ls @ Qi - R.matrix @ Qi)


def paravector_square(s: Paravector) -> Paravector:
    d = slice_decompose(s)
    return Paravector.from_slice(d.x ** 2 - d.y ** 2, 2 * d.x * d.y, d.J)


# ---- kernel and spectral projector ----------------------------------------

@dataclass
class SpectralData:
    """Norm, smallest nonzero singular value and the Riesz projector at 0.

    The projector onto the generalized kernel is ``V @ M`` with ``V`` a basis
    of the right kernel and ``M = (W^T V)^{-1} W^T`` built from the left
    kernel ``W``. It commutes with the operator whenever 0 is a semisimple
    eigenvalue, which is checked at construction.
    """

    norm: float
    sigma_lo: float
    V: np.ndarray
    M: np.ndarray
    threshold: float

    @property
    def kernel_dim(self) -> int:
        return self.V.shape[1]

    def project_off(self, X: np.ndarray) -> np.ndarray:
        if self.kernel_dim == 0:
            return X
        return X - self.V @ (self.M @ X)

    def project_on(self, X: np.ndarray) -> np.ndarray:
        if self.kernel_dim == 0:
            return np.zeros_like(X)
        return self.V @ (self.M @ X)


def _kernel_bases_dense(A: np.ndarray, rtol: float):
    U, sv, Vt = np.linalg.svd(A)
    norm = float(sv[0]) if sv.size else 0.0
    thr = rtol * max(norm, 1e-300)
    mask = sv <= thr
    V = Vt[mask].T
    W = U[:, mask]
    nonzero = sv[~mask]
    sigma_lo = float(nonzero[-1]) if nonzero.size else 0.0
    return norm, sigma_lo, V, W, thr


def _smallest_eigs(G, k: int, shift: float, seed: int):
    """k smallest eigenpairs of a symmetric positive semidefinite sparse G.

    Block LOBPCG with a shifted sparse-LU preconditioner: unlike a single
    vector Lanczos run it resolves highly degenerate eigenvalues (the grid
    gradients have kernels of dimension 2**n * 2**n).
    """
    n = G.shape[0]
    lu = spla.splu((G + shift * sp.identity(n, format="csc")).tocsc())
    M = spla.LinearOperator((n, n), matvec=lu.solve, matmat=lu.solve, dtype=float)
    X = np.random.default_rng(seed).standard_normal((n, k))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vals, vecs = spla.lobpcg(G, X, M=M, largest=False, tol=1e-10, maxiter=1000)
    order = np.argsort(vals)
    return np.clip(vals[order], 0, None), vecs[:, order]


def _kernel_bases_sparse(A, rtol: float, norm: float):
    # singular values from eigenvalues of A^T A carry an absolute error of
    # about sqrt(eps) |A|, so the relative threshold cannot go below that
    thr = max(rtol, SPARSE_KERNEL_RTOL) * norm
    n = A.shape[0]
    A = sp.csc_matrix(A)
    AtA = (A.T @ A).tocsc()
    AAt = (A @ A.T).tocsc()
    shift = 1e-3 * max(norm, 1e-150) ** 2
    k = 16
    while True:
        k = min(k, n // 5)
        vals, vecs = _smallest_eigs(AtA, k, shift, 12345)
        if vals[-1] > thr ** 2 or k >= n // 5:
            break
        k *= 2
    mask = vals <= thr ** 2
    if mask.all():
        raise NotInjective("kernel larger than the sparse eigensolver block; use a dense operator")
    V = vecs[:, mask]
    sigma_lo = float(np.sqrt(vals[~mask][0]))
    if np.any(mask):
        lvals, lvecs = _smallest_eigs(AAt, k, shift, 54321)
        W = lvecs[:, lvals <= thr ** 2]
        if W.shape[1] != V.shape[1]:
            raise NotInjective("left and right numerical kernels differ in dimension")
    else:
        W = np.zeros((n, 0))
    V, _ = np.linalg.qr(V)
    W, _ = np.linalg.qr(W)
    return sigma_lo, V, W, thr


def spectral_data(R: RealRep, rtol: float = KERNEL_RTOL) -> SpectralData:
    if R.is_sparse and R.dim > 2048:
        norm = R.norm()
        sigma_lo, V, W, thr = _kernel_bases_sparse(R.matrix, rtol, norm)
    else:
        norm, sigma_lo, V, W, thr = _kernel_bases_dense(R.dense(), rtol)
    k = V.shape[1]
    if k:
        G = W.T @ V
        if np.linalg.svd(G, compute_uv=False)[-1] < 1e-6:
            raise NotInjective("zero is not a semisimple eigenvalue; kernel cannot be split off")
        M = np.linalg.solve(G, W.T)
    else:
        M = np.zeros((0, R.dim))
    return SpectralData(norm, sigma_lo, V, M, thr)


def bordered_solve(R: RealRep, Y: np.ndarray) -> np.ndarray:
    """Solve R X = Y on the complement of the kernel (the unique X with P X = 0).

    Uses the bordered system [[R, V], [W^T, 0]], nonsingular when zero is
    semisimple. Components of Y in the kernel are discarded first.
    """
    data = R.spectral_data()
    Y = data.project_off(np.asarray(Y, dtype=float).reshape(R.dim, -1))
    k = data.kernel_dim
    if k == 0:
        if R.is_sparse:
            return spla.splu(sp.csc_matrix(R.matrix)).solve(Y)
        return sla.lu_solve(sla.lu_factor(R.dense(), check_finite=False), Y, check_finite=False)
    # M = G^{-1} W^T has the same row space as W^T, so it works as the border.
    if R.is_sparse:
        big = sp.bmat([[R.matrix, sp.csr_matrix(data.V)],
                       [sp.csr_matrix(data.M), None]], format="csc")
        sol = spla.splu(big).solve(np.vstack([Y, np.zeros((k, Y.shape[1]))]))
    else:
        big = np.block([[R.dense(), data.V], [data.M, np.zeros((k, k))]])
        sol = np.linalg.solve(big, np.vstack([Y, np.zeros((k, Y.shape[1]))]))
    return data.project_off(sol[: R.dim])


# ---- S-spectrum scan ---------------------------------------------------------

@dataclass
class SpectrumScanResult:
    s0: np.ndarray
    s1: np.ndarray
    sigma: np.ndarray  # shape (len(s1), len(s0))
    threshold: float
    candidates: list[tuple[float, float, float]]

    def rows(self):
        """(s0, s1, sigma_min, is_candidate) in deterministic grid order."""
        flagged = self._grid_flags()
        for j, y in enumerate(self.s1):
            for i, x in enumerate(self.s0):
                yield float(x), float(y), float(self.sigma[j, i]), bool(flagged[j, i])

    def _grid_flags(self):
        flags = np.zeros(self.sigma.shape, dtype=bool)
        for x, y, _ in self.candidates:
            i = int(np.argmin(np.abs(self.s0 - x)))
            j = int(np.argmin(np.abs(self.s1 - y)))
            flags[j, i] = True
        return flags

    def candidate_points(self) -> list[tuple[float, float]]:
        return [(x, y) for x, y, _ in self.candidates]


def _local_minima(sig: np.ndarray) -> list[tuple[int, int]]:
    # mirror across s1 = 0 so the real axis row sees its reflection
    padded = np.vstack([sig[1:2], sig]) if sig.shape[0] > 1 else sig
    padded = np.pad(padded, 1, constant_values=np.inf)
    offset = 1 if sig.shape[0] > 1 else 0
    found = []
    for j in range(sig.shape[0]):
        for i in range(sig.shape[1]):
            c = padded[j + offset + 1, i + 1]
            nb = padded[j + offset: j + offset + 3, i: i + 3]
            if c <= nb.min() and np.isfinite(c):
                found.append((j, i))
    return found


def s_spectrum_scan(T, window: Sequence[float] | None = None, resolution=(41, 11),
                    tol_spec: float = 1e-8, refine: bool = True) -> SpectrumScanResult:
    """Sample sigma_min(Q_s[T]) on a grid of (s0, s1), s1 >= 0.

    ``window`` is ``(s0_min, s0_max, s1_min, s1_max)``; the default is
    ``[-2|T|, 2|T|] x [0, 2|T|]``. Grid local minima are refined by a bounded
    local minimization and kept as candidates when the refined value is below
    ``tol_spec * |T|^2``.
    """
    R = as_rep(T)
    norm = R.norm()
    if window is None:
        w = 2.0 * max(norm, 1e-12)
        window = (-w, w, 0.0, w)
    a, b, c, d = map(float, window)
    if not (a < b and c <= d and c >= 0):
        raise ValueError(f"bad scan window {window}")
    n0, n1 = resolution
    s0 = np.linspace(a, b, n0)
    s1 = np.linspace(c, d, n1)
    R2 = R.squared().matrix
    Rm = R.matrix
    eye = _eye_like(R)

    def smin(x: float, y: float) -> float:
        return sigma_min(R2 - 2.0 * x * Rm + (x * x + y * y) * eye)

    sig = np.array([[smin(x, y) for x in s0] for y in s1])
    thr = tol_spec * max(norm, 1e-300) ** 2
    candidates = []
    if refine:
        dx = (b - a) / max(n0 - 1, 1)
        dy = (d - c) / max(n1 - 1, 1)
        for j, i in _local_minima(sig):
            x0, y0 = s0[i], s1[j]
            if y0 == 0.0 or n1 == 1:
                res = minimize_scalar(lambda x: smin(x, y0), bounds=(x0 - dx, x0 + dx),
                                      method="bounded", options={"xatol": 1e-13})
                best = (float(res.x), y0, float(res.fun))
            else:
                lo = [x0 - dx, max(y0 - dy, 0.0)]
                hi = [x0 + dx, y0 + dy]
                res = minimize(lambda p: smin(*np.clip(p, lo, hi)), [x0, y0], method="Nelder-Mead",
                               options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": 400})
                p = np.clip(res.x, lo, hi)
                best = (float(p[0]), float(p[1]), float(res.fun))
            if sig[j, i] < best[2]:
                best = (float(x0), float(y0), float(sig[j, i]))
            if best[2] <= thr:
                candidates.append(best)
    else:
        candidates = [(float(s0[i]), float(s1[j]), float(sig[j, i]))
                      for j, i in _local_minima(sig) if sig[j, i] <= thr]
    candidates.sort(key=lambda t: (t[1], t[0]))
    return SpectrumScanResult(s0, s1, sig, thr, candidates)


# ---- bisectorial certificate ----------------------------------------------

@dataclass
class BisectorialCertificate:
    omega: float
    samples: list[tuple[Paravector, float]]
    C_phi: dict[float, float]
    bound: float
    passed: bool
    failures: list[str]


def _operator_norm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, 2))


def bisectorial_certificate(T, omega: float, phi_list: Sequence[float], radii=None,
                            n_angles: int = 7, units: Sequence[Paravector] | None = None,
                            bound: float = 1e6, tol_spec: float = 1e-8) -> BisectorialCertificate:
    """Sample |s| * |S_L^{-1}(s,T)| outside the double sectors D_phi.

    Angles are drawn from ``[min(phi_list), pi/2]`` together with their
    mirror images about the imaginary axis, so the sample set for a larger
    ``phi`` is a subset of the one for a smaller ``phi``.
    """
    R = as_rep(T)
    phis = sorted(float(p) for p in phi_list)
    if not phis or phis[0] <= omega or phis[-1] >= np.pi / 2:
        raise ValueError("need omega < phi < pi/2 for every test angle")
    scale = max(R.norm(), 1e-12)
    if radii is None:
        radii = scale * np.logspace(-3, 3, 25)
    if units is None:
        units = [e_unit(R.n, 1)]
        if R.n > 1:
            units.append(e_unit(R.n, 2))
            units.append(Paravector(0.0, np.ones(R.n) / np.sqrt(R.n)))
    thetas = sorted(set(np.linspace(phis[0], np.pi / 2, n_angles)) | set(phis))
    samples: list[tuple[Paravector, float]] = []
    angle_of: list[float] = []
    failures: list[str] = []
    for J in units:
        for theta in thetas:
            for side in (theta, np.pi - theta) if theta < np.pi / 2 else (theta,):
                for r in radii:
                    s = Paravector.from_slice(r * np.cos(side), r * np.sin(side), J)
                    try:
                        val = r * _operator_norm(s_resolvent_left(s, R, tol_spec).dense())
                    except SingularAtS:
                        val = np.inf
                        failures.append(f"spectrum leak at angle {theta:.4f}, radius {r:.3e}")
                    samples.append((s, val))
                    angle_of.append(theta)
    C_phi = {}
    for phi in phis:
        vals = [v for (s, v), t in zip(samples, angle_of) if t >= phi - 1e-15]
        C_phi[phi] = float(max(vals))
    passed = all(np.isfinite(c) and c <= bound for c in C_phi.values())
    return BisectorialCertificate(omega, samples, C_phi, bound, passed, failures)
