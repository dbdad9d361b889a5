"""Pointwise exterior calculus on R^n for 2 <= n <= 6.

A k-form is stored extensionally as a callable returning its C(n, k)
coefficients on the lexicographically ordered basis ``dx_I``,
``I = (i_1 < ... < i_k)``. Derivatives are central differences with step
``1e-5 * max(1, |x|_inf)``. Coefficient callables must be side-effect free.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations
from math import comb
from typing import Callable, Mapping

import numpy as np

from .errors import DegreeError, InvalidDimensionError, InvalidInputError, NumericError

MAX_DIM = 6

__all__ = [
    "FormField",
    "VectorField",
    "multi_indices",
    "wedge",
    "exterior_derivative",
    "contract",
    "lie_derivative_cartan",
    "lie_derivative_flow",
    "lie_bracket",
]


def _step(x: np.ndarray) -> float:
    return 1e-5 * max(1.0, float(np.max(np.abs(x))))


@lru_cache(maxsize=None)
def multi_indices(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    return tuple(combinations(range(n), k))


@lru_cache(maxsize=None)
def _position(n: int, k: int) -> dict[tuple[int, ...], int]:
    return {idx: i for i, idx in enumerate(multi_indices(n, k))}


def _parity(seq: tuple[int, ...]) -> int:
    sign = 1
    seq = list(seq)
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@lru_cache(maxsize=None)
def _wedge_table(n: int, k: int, l: int) -> tuple[tuple[int, int, int, int], ...]:
    out = _position(n, k + l)
    table = []
    for ia, a in enumerate(multi_indices(n, k)):
        for ib, b in enumerate(multi_indices(n, l)):
            if set(a) & set(b):
                continue
            table.append((ia, ib, out[tuple(sorted(a + b))], _parity(a + b)))
    return tuple(table)


@lru_cache(maxsize=None)
def _d_table(n: int, k: int) -> tuple[tuple[int, int, int, int], ...]:
    # (da)_K = sum_{j in K} (-1)^{pos of j in K} d_j a_{K \ j}
    src = _position(n, k)
    table = []
    for ik, big in enumerate(multi_indices(n, k + 1)):
        for pos, j in enumerate(big):
            rest = big[:pos] + big[pos + 1 :]
            table.append((ik, j, src[rest], -1 if pos % 2 else 1))
    return tuple(table)


@lru_cache(maxsize=None)
def _contract_table(n: int, k: int) -> tuple[tuple[int, int, int, int], ...]:
    # (i_X a)_J = sum_{i not in J} (-1)^{pos of i in J+i} X_i a_{J+i}
    src = _position(n, k)
    table = []
    for ij, small in enumerate(multi_indices(n, k - 1)):
        for i in range(n):
            if i in small:
                continue
            big = tuple(sorted(small + (i,)))
            pos = big.index(i)
            table.append((ij, i, src[big], -1 if pos % 2 else 1))
    return tuple(table)


class FormField:
    """Differential k-form on R^n given by a coefficient callable."""

    def __init__(self, n: int, k: int, coeffs: Callable[[np.ndarray], np.ndarray]):
        if not 2 <= n <= MAX_DIM:
            raise InvalidDimensionError(f"dimension must be in [2, {MAX_DIM}], got {n}")
        if not 0 <= k <= n:
            raise DegreeError(f"degree {k} out of range for n={n}")
        self.n = n
        self.k = k
        self._coeffs = coeffs

    @property
    def size(self) -> int:
        return comb(self.n, self.k)

    @property
    def basis(self) -> tuple[tuple[int, ...], ...]:
        return multi_indices(self.n, self.k)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise InvalidDimensionError(f"point must have shape ({self.n},), got {x.shape}")
        c = np.atleast_1d(np.asarray(self._coeffs(x), dtype=float))
        if c.shape != (self.size,):
            raise InvalidDimensionError(f"coefficient array must have length {self.size}, got {c.shape}")
        return c

    def __repr__(self):
        return f"FormField(n={self.n}, k={self.k})"

    @classmethod
    def scalar(cls, n: int, f: Callable[[np.ndarray], float]) -> FormField:
        return cls(n, 0, lambda x: np.array([f(x)]))

    @classmethod
    def zero(cls, n: int, k: int) -> FormField:
        size = comb(n, k)
        return cls(n, k, lambda x: np.zeros(size))

    @classmethod
    def constant(cls, n: int, k: int, values) -> FormField:
        values = np.array(values, dtype=float).reshape(-1)
        return cls(n, k, lambda x: values)

    @classmethod
    def from_terms(cls, n: int, k: int, terms: Mapping[tuple[int, ...], Callable[[np.ndarray], float] | float]) -> FormField:
        """Build a form from ``{(i_1, ..., i_k): coefficient}``.

        Indices may be given in any order; they are sorted with the matching
        permutation sign. Constant coefficients are accepted.
        """
        pos = _position(n, k)
        entries = []
        for idx, coef in terms.items():
            idx = tuple(idx)
            if len(idx) != k or len(set(idx)) != k or any(not 0 <= i < n for i in idx):
                raise InvalidInputError(f"bad multi-index {idx} for a {k}-form on R^{n}")
            f = coef if callable(coef) else (lambda x, c=float(coef): c)
            entries.append((pos[tuple(sorted(idx))], _parity(idx), f))
        size = comb(n, k)

        def coeffs(x):
            out = np.zeros(size)
            for i, s, f in entries:
                out[i] += s * f(x)
            return out

        return cls(n, k, coeffs)

    def _check_compatible(self, other: FormField):
        if self.n != other.n or self.k != other.k:
            raise InvalidInputError(f"incompatible forms {self} and {other}")

    def __add__(self, other: FormField) -> FormField:
        self._check_compatible(other)
        return FormField(self.n, self.k, lambda x: self(x) + other(x))

    def __sub__(self, other: FormField) -> FormField:
        self._check_compatible(other)
        return FormField(self.n, self.k, lambda x: self(x) - other(x))

    def __neg__(self) -> FormField:
        return FormField(self.n, self.k, lambda x: -self(x))

    def __mul__(self, c: float) -> FormField:
        return FormField(self.n, self.k, lambda x: c * self(x))

    __rmul__ = __mul__


class VectorField:
    """Vector field on R^n."""

    def __init__(self, n: int, func: Callable[[np.ndarray], np.ndarray]):
        if not 2 <= n <= MAX_DIM:
            raise InvalidDimensionError(f"dimension must be in [2, {MAX_DIM}], got {n}")
        self.n = n
        self._func = func

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(self._func(x), dtype=float)
        if v.shape != (self.n,):
            raise InvalidDimensionError(f"field output must have shape ({self.n},), got {v.shape}")
        return v

    def __repr__(self):
        return f"VectorField(n={self.n})"

    @classmethod
    def constant(cls, values) -> VectorField:
        values = np.array(values, dtype=float)
        return cls(values.size, lambda x: values)

    @classmethod
    def linear(cls, A, b=None) -> VectorField:
        A = np.array(A, dtype=float)
        b = np.zeros(A.shape[0]) if b is None else np.array(b, dtype=float)
        return cls(A.shape[0], lambda x: A @ x + b)

    def scaled(self, f: Callable[[np.ndarray], float]) -> VectorField:
        """The field ``f X``."""
        return VectorField(self.n, lambda x: f(x) * self(x))

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = _step(x)
        cols = []
        for j in range(self.n):
            e = np.zeros(self.n)
            e[j] = h
            cols.append((self(x + e) - self(x - e)) / (2 * h))
        return np.stack(cols, axis=1)


def _same_dim(*objs):
    dims = {o.n for o in objs}
    if len(dims) != 1:
        raise InvalidDimensionError(f"dimension mismatch: {sorted(dims)}")


def wedge(a: FormField, b: FormField) -> FormField:
    _same_dim(a, b)
    n, k, l = a.n, a.k, b.k
    if k + l > n:
        raise DegreeError(f"wedge of degrees {k} and {l} overflows n={n}")
    table = _wedge_table(n, k, l)
    size = comb(n, k + l)

    def coeffs(x):
        ca, cb = a(x), b(x)
        out = np.zeros(size)
        for ia, ib, io, s in table:
            out[io] += s * ca[ia] * cb[ib]
        return out

    return FormField(n, k + l, coeffs)


def _coeff_jacobian(a: FormField, x: np.ndarray) -> np.ndarray:
    """``D[I, j] = d a_I / d x_j`` by central differences."""
    h = _step(x)
    cols = []
    for j in range(a.n):
        e = np.zeros(a.n)
        e[j] = h
        cols.append((a(x + e) - a(x - e)) / (2 * h))
    return np.stack(cols, axis=1)


def exterior_derivative(a: FormField) -> FormField:
    n, k = a.n, a.k
    if k >= n:
        raise DegreeError(f"d of a {k}-form overflows n={n}")
    table = _d_table(n, k)
    size = comb(n, k + 1)

    def coeffs(x):
        jac = _coeff_jacobian(a, x)
        out = np.zeros(size)
        for ik, j, isrc, s in table:
            out[ik] += s * jac[isrc, j]
        return out

    return FormField(n, k + 1, coeffs)


def contract(X: VectorField, a: FormField) -> FormField:
    """Interior product ``i_X a``."""
    _same_dim(X, a)
    n, k = a.n, a.k
    if k == 0:
        raise DegreeError("cannot contract a 0-form")
    table = _contract_table(n, k)
    size = comb(n, k - 1)

    def coeffs(x):
        v, ca = X(x), a(x)
        out = np.zeros(size)
        for ij, i, isrc, s in table:
            out[ij] += s * v[i] * ca[isrc]
        return out

    return FormField(n, k - 1, coeffs)


def lie_derivative_cartan(X: VectorField, a: FormField) -> FormField:
    """``L_X a = i_X(da) + d(i_X a)``."""
    _same_dim(X, a)
    if a.k == 0:
        return contract(X, exterior_derivative(a))
    first = contract(X, exterior_derivative(a)) if a.k < a.n else FormField.zero(a.n, a.k)
    return first + exterior_derivative(contract(X, a))


def _rk4_step(X: VectorField, x: np.ndarray, t: float) -> np.ndarray:
    k1 = X(x)
    k2 = X(x + 0.5 * t * k1)
    k3 = X(x + 0.5 * t * k2)
    k4 = X(x + t * k3)
    return x + t / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def lie_derivative_flow(X: VectorField, a: FormField, t: float = 1e-3) -> FormField:
    """Finite-difference Lie derivative ``(phi_t^* a - a) / t``.

    ``phi_t`` is one RK4 step of the flow of X; the pullback uses the
    k x k minors of its Jacobian (itself a central difference).
    """
    _same_dim(X, a)
    if not 1e-6 <= abs(t) <= 1e-2:
        raise InvalidInputError(f"|t| must lie in [1e-6, 1e-2], got {t}")
    n, k = a.n, a.k
    basis = multi_indices(n, k)

    def coeffs(x):
        y = _rk4_step(X, x, t)
        if not np.all(np.isfinite(y)):
            raise NumericError("flow integration produced non-finite values")
        ay = a(y)
        if k == 0:
            return (ay - a(x)) / t
        h = _step(x)
        # difference the displacement phi(x) - x so that X = 0 gives exactly I
        dphi = np.eye(n)
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            plus = _rk4_step(X, x + e, t) - (x + e)
            minus = _rk4_step(X, x - e, t) - (x - e)
            dphi[:, j] += (plus - minus) / (2 * h)
        pulled = np.zeros(len(basis))
        for i, cols in enumerate(basis):
            sub = dphi[:, cols]
            pulled[i] = sum(ay[r] * np.linalg.det(sub[list(rows), :]) for r, rows in enumerate(basis))
        return (pulled - a(x)) / t

    return FormField(n, k, coeffs)


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """``[X, Y] = DY.X - DX.Y``."""
    _same_dim(X, Y)
    return VectorField(X.n, lambda x: Y.jacobian(x) @ X(x) - X.jacobian(x) @ Y(x))
