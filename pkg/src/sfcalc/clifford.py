"""Real Clifford algebra R_n and intrinsic slice functions.

Basis blades are stored as bitmasks: bit ``i-1`` set means ``e_i`` is a
factor, and the factors inside a blade are always in increasing order.
Coefficient arrays are indexed by the mask, so ``coeffs[0]`` is the scalar
part and ``coeffs[1 << (i - 1)]`` is the ``e_i`` coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DomainError,
    NonPositiveScalarPart,
    ZeroScalarPart,
)

MAX_DIM = 8


def blade_grade(mask: int) -> int:
    return bin(mask).count("1")


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    count = np.zeros_like(x)
    while np.any(x):
        count += x & 1
        x >>= 1
    return count


@lru_cache(maxsize=None)
def product_table(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(index, sign)`` with ``e_a e_b = sign[a, b] * e_{index[a, b]}``.

    The sign counts the transpositions needed to sort the concatenated factor
    list, plus one factor of -1 for every generator appearing in both blades.
    """
    if not 1 <= n <= MAX_DIM:
        raise ValueError(f"algebra dimension must be in [1, {MAX_DIM}], got {n}")
    dim = 1 << n
    a = np.arange(dim)[:, None]
    b = np.arange(dim)[None, :]
    swaps = np.zeros((dim, dim), dtype=np.int64)
    for i in range(n):
        in_b = (b >> i) & 1
        # generators of a that sit to the right of e_{i+1} once sorted
        swaps = swaps + in_b * _popcount(a >> (i + 1))
    swaps = swaps + _popcount(a & b)
    sign = np.where(swaps % 2 == 0, 1.0, -1.0)
    index = np.broadcast_to(a ^ b, (dim, dim)).copy()
    index.setflags(write=False)
    sign.setflags(write=False)
    return index, sign


@lru_cache(maxsize=None)
def _grade_signs(n: int) -> tuple[np.ndarray, np.ndarray]:
    grades = np.array([blade_grade(k) for k in range(1 << n)])
    conj = np.where((grades * (grades + 1) // 2) % 2 == 0, 1.0, -1.0)
    rev = np.where((grades * (grades - 1) // 2) % 2 == 0, 1.0, -1.0)
    conj.setflags(write=False)
    rev.setflags(write=False)
    return conj, rev


def grades(n: int) -> np.ndarray:
    return np.array([blade_grade(k) for k in range(1 << n)])


def left_matrix(n: int, coeffs: np.ndarray) -> np.ndarray:
    """Matrix of x -> a x acting on coefficient vectors."""
    index, sign = product_table(n)
    dim = 1 << n
    out = np.zeros((dim, dim))
    cols = np.broadcast_to(np.arange(dim)[None, :], (dim, dim))
    out[index, cols] = sign * np.asarray(coeffs, dtype=float)[:, None]
    return out


def right_matrix(n: int, coeffs: np.ndarray) -> np.ndarray:
    """Matrix of x -> x b acting on coefficient vectors."""
    index, sign = product_table(n)
    dim = 1 << n
    out = np.zeros((dim, dim))
    rows_of_x = np.broadcast_to(np.arange(dim)[:, None], (dim, dim))
    out[index, rows_of_x] = sign * np.asarray(coeffs, dtype=float)[None, :]
    return out


class Multivector:
    """Immutable element of R_n."""

    __slots__ = ("n", "coeffs")

    def __init__(self, n: int, coeffs: Iterable[float]):
        arr = np.array(coeffs, dtype=float)
        if not 1 <= n <= MAX_DIM:
            raise ValueError(f"algebra dimension must be in [1, {MAX_DIM}], got {n}")
        if arr.shape != (1 << n,):
            raise DimensionMismatch(f"expected {1 << n} coefficients, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "coeffs", arr)

    def __setattr__(self, key, value):
        raise AttributeError("Multivector is immutable")

    # constructors
    @classmethod
    def zero(cls, n: int) -> Multivector:
        return cls(n, np.zeros(1 << n))

    @classmethod
    def scalar(cls, n: int, value: float) -> Multivector:
        c = np.zeros(1 << n)
        c[0] = value
        return cls(n, c)

    @classmethod
    def blade(cls, n: int, mask: int, value: float = 1.0) -> Multivector:
        c = np.zeros(1 << n)
        c[mask] = value
        return cls(n, c)

    @classmethod
    def e(cls, n: int, i: int) -> Multivector:
        """Generator e_i, 1-based."""
        if not 1 <= i <= n:
            raise ValueError(f"generator index {i} out of range for n={n}")
        return cls.blade(n, 1 << (i - 1))

    # algebra
    def _coerce(self, other) -> Multivector:
        if isinstance(other, Multivector):
            if other.n != self.n:
                raise DimensionMismatch(f"R_{self.n} vs R_{other.n}")
            return other
        if isinstance(other, Paravector):
            return self._coerce(other.to_multivector())
        if np.isscalar(other):
            return Multivector.scalar(self.n, float(other))
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return Multivector(self.n, self.coeffs + o.coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return Multivector(self.n, self.coeffs - o.coeffs)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return Multivector(self.n, o.coeffs - self.coeffs)

    def __neg__(self):
        return Multivector(self.n, -self.coeffs)

    def __mul__(self, other):
        if np.isscalar(other):
            return Multivector(self.n, self.coeffs * float(other))
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return geometric_product(self, o)

    def __rmul__(self, other):
        if np.isscalar(other):
            return Multivector(self.n, self.coeffs * float(other))
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return geometric_product(o, self)

    def __truediv__(self, other):
        if np.isscalar(other):
            return Multivector(self.n, self.coeffs / float(other))
        return NotImplemented

    def __eq__(self, other):
        if isinstance(other, Multivector):
            return self.n == other.n and np.array_equal(self.coeffs, other.coeffs)
        return NotImplemented

    def __hash__(self):
        return hash((self.n, self.coeffs.tobytes()))

    def __repr__(self):
        terms = []
        for mask, c in enumerate(self.coeffs):
            if c == 0:
                continue
            if mask == 0:
                terms.append(f"{c:g}")
            else:
                name = "e" + "".join(str(i + 1) for i in range(self.n) if mask >> i & 1)
                terms.append(f"{c:g}*{name}")
        return f"Multivector(n={self.n}, {' + '.join(terms) or '0'})"

    # involutions and norms
    def conj(self) -> Multivector:
        """Clifford conjugate: reversion composed with grade involution."""
        return Multivector(self.n, self.coeffs * _grade_signs(self.n)[0])

    def reverse(self) -> Multivector:
        return Multivector(self.n, self.coeffs * _grade_signs(self.n)[1])

    def scalar_part(self) -> float:
        return float(self.coeffs[0])

    def grade(self, k: int) -> Multivector:
        return Multivector(self.n, np.where(grades(self.n) == k, self.coeffs, 0.0))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def is_paravector(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs[grades(self.n) > 1]) <= tol))

    def to_paravector(self, tol: float = 1e-12) -> Paravector:
        if not self.is_paravector(tol * max(1.0, self.norm())):
            raise ValueError("multivector has components of grade > 1")
        vec = [self.coeffs[1 << i] for i in range(self.n)]
        return Paravector(self.coeffs[0], vec)

    def left_matrix(self) -> np.ndarray:
        return left_matrix(self.n, self.coeffs)

    def right_matrix(self) -> np.ndarray:
        return right_matrix(self.n, self.coeffs)


def geometric_product(a: Multivector, b: Multivector) -> Multivector:
    if a.n != b.n:
        raise DimensionMismatch(f"cannot multiply R_{a.n} by R_{b.n}")
    index, sign = product_table(a.n)
    weights = sign * np.outer(a.coeffs, b.coeffs)
    return Multivector(a.n, np.bincount(index.ravel(), weights.ravel(), minlength=1 << a.n))


@dataclass(frozen=True)
class Paravector:
    """s = s0 + sum_i vec[i] e_{i+1}."""

    s0: float
    vec: tuple[float, ...]

    def __init__(self, s0: float, vec: Sequence[float]):
        object.__setattr__(self, "s0", float(s0))
        object.__setattr__(self, "vec", tuple(float(v) for v in vec))
        if not 1 <= len(self.vec) <= MAX_DIM:
            raise ValueError("paravector needs between 1 and 8 vector components")

    @property
    def n(self) -> int:
        return len(self.vec)

    @classmethod
    def real(cls, n: int, x: float) -> Paravector:
        return cls(x, [0.0] * n)

    @classmethod
    def from_slice(cls, x: float, y: float, J: Paravector) -> Paravector:
        return cls(x, [y * j for j in J.vec])

    def abs(self) -> float:
        return float(np.hypot(self.s0, np.linalg.norm(self.vec)))

    def abs2(self) -> float:
        return self.s0 ** 2 + float(np.dot(self.vec, self.vec))

    def conj(self) -> Paravector:
        return Paravector(self.s0, [-v for v in self.vec])

    def __neg__(self) -> Paravector:
        return Paravector(-self.s0, [-v for v in self.vec])

    def __add__(self, other: Paravector) -> Paravector:
        return Paravector(self.s0 + other.s0, np.add(self.vec, other.vec))

    def __sub__(self, other: Paravector) -> Paravector:
        return Paravector(self.s0 - other.s0, np.subtract(self.vec, other.vec))

    def scale(self, c: float) -> Paravector:
        return Paravector(c * self.s0, [c * v for v in self.vec])

    def to_multivector(self) -> Multivector:
        c = np.zeros(1 << self.n)
        c[0] = self.s0
        for i, v in enumerate(self.vec):
            c[1 << i] = v
        return Multivector(self.n, c)

    def __mul__(self, other):
        return self.to_multivector() * other

    def __rmul__(self, other):
        return other * self.to_multivector()


def e_unit(n: int, i: int) -> Paravector:
    vec = [0.0] * n
    vec[i - 1] = 1.0
    return Paravector(0.0, vec)


@dataclass(frozen=True)
class SliceDecomposition:
    x: float
    y: float
    J: Paravector
    degenerate: bool = False


def slice_decompose(s: Paravector) -> SliceDecomposition:
    """Write s = x + J y with y >= 0 and J a unit imaginary paravector.

    On the real axis the slice is not unique; e_1 is returned and the result
    is flagged as degenerate.
    """
    y = float(np.linalg.norm(s.vec))
    if y == 0.0:
        return SliceDecomposition(s.s0, 0.0, e_unit(s.n, 1), True)
    return SliceDecomposition(s.s0, y, Paravector(0.0, [v / y for v in s.vec]))


def _from_slice_complex(w: complex, J: Paravector) -> Multivector:
    return Paravector(w.real, [w.imag * j for j in J.vec]).to_multivector()


def slice_log(s: Paravector) -> Multivector:
    if s.s0 <= 0:
        raise NonPositiveScalarPart(f"log needs Sc(s) > 0, got {s.s0}")
    d = slice_decompose(s)
    return _from_slice_complex(complex(np.log(s.abs()), np.arctan2(d.y, d.x)), d.J)


def slice_exp(s: Paravector) -> Multivector:
    d = slice_decompose(s)
    return _from_slice_complex(np.exp(complex(d.x, d.y)), d.J)


def slice_pow(s: Paravector, alpha: float) -> Multivector:
    """s**alpha = exp(alpha ln s) for Sc(s) > 0."""
    log = slice_log(s).to_paravector()
    return slice_exp(log.scale(alpha))


def _p_complex(z, alpha: float):
    z = np.asarray(z, dtype=complex)
    if np.any(z.real == 0):
        raise ZeroScalarPart("p_alpha/q_alpha are undefined on Sc(s) = 0")
    return np.where(z.real > 0, z ** alpha, -((-z) ** alpha))


def _q_complex(z, alpha: float):
    z = np.asarray(z, dtype=complex)
    if np.any(z.real == 0):
        raise ZeroScalarPart("p_alpha/q_alpha are undefined on Sc(s) = 0")
    return np.where(z.real > 0, z ** alpha, (-z) ** alpha)


@dataclass(frozen=True)
class IntrinsicSliceFunction:
    """Slice function f(x + J y) = u(x, y) + J v(x, y) with real u, v.

    ``g`` is the holomorphic-in-the-slice representative acting on complex
    arrays: u = Re g(x + iy), v = Im g(x + iy). It must satisfy
    g(conj z) = conj g(z), which is what makes f intrinsic.
    ``decay`` records whether f vanishes at 0 and at infinity, which is the
    admissibility test for the plain contour calculus.
    """

    g: Callable[[np.ndarray], np.ndarray]
    name: str = "f"
    nonzero_scalar: bool = False
    decay: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        if self.nonzero_scalar and np.any(z.real == 0):
            raise ZeroScalarPart(f"{self.name} is undefined on Sc(s) = 0")
        return self.g(z)

    def components(self, x, y):
        w = self(np.asarray(x) + 1j * np.asarray(y))
        return w.real, w.imag

    def __mul__(self, other: IntrinsicSliceFunction) -> IntrinsicSliceFunction:
        if np.isscalar(other):
            c = float(other)
            return IntrinsicSliceFunction(lambda z: c * self.g(z), f"{c}*{self.name}",
                                          self.nonzero_scalar, self.decay)
        return IntrinsicSliceFunction(
            lambda z: self.g(z) * other.g(z), f"({self.name})*({other.name})",
            self.nonzero_scalar or other.nonzero_scalar, self.decay or other.decay)

    __rmul__ = __mul__

    def __add__(self, other: IntrinsicSliceFunction) -> IntrinsicSliceFunction:
        return IntrinsicSliceFunction(
            lambda z: self.g(z) + other.g(z), f"{self.name}+{other.name}",
            self.nonzero_scalar or other.nonzero_scalar, self.decay and other.decay)

    def __sub__(self, other: IntrinsicSliceFunction) -> IntrinsicSliceFunction:
        return self + (-1.0) * other

    def compose(self, inner: IntrinsicSliceFunction) -> IntrinsicSliceFunction:
        """self o inner, again intrinsic."""
        return IntrinsicSliceFunction(lambda z: self(inner(z)), f"{self.name}o{inner.name}",
                                      inner.nonzero_scalar)


def eval_intrinsic(f: IntrinsicSliceFunction, s: Paravector) -> Multivector:
    d = slice_decompose(s)
    try:
        w = complex(f(np.array([complex(d.x, d.y)]))[0])
    except ZeroScalarPart:
        raise
    except (FloatingPointError, ZeroDivisionError) as exc:
        raise DomainError(f"{f.name} undefined at {s}") from exc
    if not np.isfinite(w):
        raise DomainError(f"{f.name} undefined at {s}")
    return _from_slice_complex(w, d.J)


def frac_power_p(s: Paravector, alpha: float) -> Multivector:
    if s.s0 == 0:
        raise ZeroScalarPart("p_alpha is undefined on Sc(s) = 0")
    if s.s0 > 0:
        return slice_pow(s, alpha)
    return -slice_pow(-s, alpha)


def frac_power_q(s: Paravector, alpha: float) -> Multivector:
    if s.s0 == 0:
        raise ZeroScalarPart("q_alpha is undefined on Sc(s) = 0")
    if s.s0 > 0:
        return slice_pow(s, alpha)
    return slice_pow(-s, alpha)


# ---- shipped intrinsic functions -------------------------------------------

def identity() -> IntrinsicSliceFunction:
    return IntrinsicSliceFunction(lambda z: z, "s")


def constant(c: float) -> IntrinsicSliceFunction:
    return IntrinsicSliceFunction(lambda z: np.full_like(z, c, dtype=complex), f"{c}")


def p_power(alpha: float) -> IntrinsicSliceFunction:
    return IntrinsicSliceFunction(lambda z: _p_complex(z, alpha), f"p_{alpha}", True,
                                  meta={"kind": "p", "alpha": alpha})


def q_power(alpha: float) -> IntrinsicSliceFunction:
    return IntrinsicSliceFunction(lambda z: _q_complex(z, alpha), f"q_{alpha}", True,
                                  meta={"kind": "q", "alpha": alpha})


def sgn() -> IntrinsicSliceFunction:
    return p_power(0.0)


def positive_regularizer(order: int) -> IntrinsicSliceFunction:
    """(1 + s^2)^(-order)."""
    return IntrinsicSliceFunction(lambda z: (1.0 + z * z) ** (-order), f"(1+s^2)^-{order}",
                                  meta={"kind": "positive", "order": order})


def injective_regularizer(order: int) -> IntrinsicSliceFunction:
    """s^order (1 + s^2)^(-order)."""
    return IntrinsicSliceFunction(lambda z: z ** order * (1.0 + z * z) ** (-order),
                                  f"s^{order}(1+s^2)^-{order}", decay=True,
                                  meta={"kind": "injective", "order": order})


def bump() -> IntrinsicSliceFunction:
    """s (1 + s^2)^-2, the stock decaying test function."""
    return IntrinsicSliceFunction(lambda z: z / (1.0 + z * z) ** 2, "s/(1+s^2)^2", decay=True)


def inverse_one_plus_square() -> IntrinsicSliceFunction:
    return IntrinsicSliceFunction(lambda z: 1.0 / (1.0 + z * z), "1/(1+s^2)")


@dataclass(frozen=True)
class SectorGeometry:
    omega: float
    kind: str = "double"

    def __post_init__(self):
        if self.kind not in ("double", "single"):
            raise ValueError(f"unknown sector kind {self.kind!r}")

    def slice_angle(self, s: Paravector) -> float:
        d = slice_decompose(s)
        return float(np.arctan2(d.y, d.x))

    def contains(self, s: Paravector) -> bool:
        if s.abs() == 0:
            return False
        theta = self.slice_angle(s)
        if self.kind == "single":
            return theta < self.omega
        return theta < self.omega or np.pi - theta < self.omega
