"""Truncated multivariate Taylor arithmetic for array-valued fields.

A :class:`Jet` holds the value of a (possibly tensor-valued) field at a point
together with its partial derivatives up to some order ``k <= 3``.  The
``m``-th coefficient has shape ``shape + (n,) * m``; derivative axes always
come last and are *not* divided by factorials.

Products follow the multivariate Leibniz rule and composition with a scalar
function follows Faa di Bruno's formula, so every derivative produced here is
exact up to floating point rounding.
"""

from __future__ import annotations

from itertools import combinations
from typing import Callable, Sequence

import numpy as np

MAX_ORDER = 3

# sublist-form einsum labels: value axes 0..25 (a-z), derivative axes 40..43
_DLAB = (40, 41, 42, 43)


class JetOrderError(ValueError):
    """Raised when a derivative beyond the available jet order is requested."""


def _parse_spec(spec: str) -> tuple[list[list[int]], list[int]]:
    lhs, out = spec.replace(" ", "").split("->")
    ops = lhs.split(",")

    def lab(s: str) -> list[int]:
        return [ord(c) - ord("a") for c in s]

    return [lab(o) for o in ops], lab(out)


def _shuffles(m: int, s: int):
    """Yield axis permutations taking a base term to every (s, m-s) split."""
    for first in combinations(range(m), s):
        rest = [j for j in range(m) if j not in first]
        perm = list(first) + rest
        yield [perm.index(j) for j in range(m)]


class Jet:
    __slots__ = ("coeffs", "n")

    def __init__(self, coeffs: Sequence[np.ndarray], n: int):
        if not 1 <= len(coeffs) <= MAX_ORDER + 1:
            raise JetOrderError(f"jet order {len(coeffs) - 1} not supported")
        self.coeffs = tuple(np.asarray(c, dtype=float) for c in coeffs)
        self.n = n

    @classmethod
    def _wrap(cls, coeffs: tuple, n: int) -> "Jet":
        # internal: coefficients are already float arrays of a valid order
        out = cls.__new__(cls)
        out.coeffs = coeffs
        out.n = n
        return out

    # -- construction ---------------------------------------------------------
    @classmethod
    def constant(cls, value, n: int, order: int = MAX_ORDER) -> "Jet":
        value = np.asarray(value, dtype=float)
        cs = [value] + [np.zeros(value.shape + (n,) * m) for m in range(1, order + 1)]
        return cls(cs, n)

    @classmethod
    def variable(cls, index: int, value: float, n: int, order: int = MAX_ORDER) -> "Jet":
        cs = [np.asarray(float(value))]
        if order >= 1:
            d1 = np.zeros(n)
            d1[index] = 1.0
            cs.append(d1)
        cs += [np.zeros((n,) * m) for m in range(2, order + 1)]
        return cls(cs, n)

    @classmethod
    def stack(cls, jets: Sequence["Jet"], shape: tuple[int, ...]) -> "Jet":
        order = min(j.order for j in jets)
        n = jets[0].n
        cs = []
        for m in range(order + 1):
            arr = np.stack([j.coeffs[m] for j in jets])
            cs.append(arr.reshape(shape + arr.shape[1:]))
        return cls(cs, n)

    # -- accessors ------------------------------------------------------------
    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs[0].shape

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    def _get(self, m: int) -> np.ndarray:
        if m > self.order:
            raise JetOrderError(f"derivative of order {m} requested from a jet of order {self.order}")
        return self.coeffs[m]

    @property
    def d1(self) -> np.ndarray:
        return self._get(1)

    @property
    def d2(self) -> np.ndarray:
        return self._get(2)

    @property
    def d3(self) -> np.ndarray:
        return self._get(3)

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise JetOrderError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.coeffs[: order + 1], self.n)

    def diff(self) -> "Jet":
        """Gradient field: a jet one order lower with a trailing derivative axis."""
        if self.order < 1:
            raise JetOrderError("cannot differentiate an order-0 jet")
        return Jet(self.coeffs[1:], self.n)

    def transpose(self, *axes: int) -> "Jet":
        k = len(self.shape)
        return Jet([c.transpose(list(axes) + list(range(k, c.ndim))) for c in self.coeffs], self.n)

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet([c[idx] for c in self.coeffs], self.n)

    # -- linear operations ----------------------------------------------------
    def _align(self, other: "Jet") -> tuple["Jet", "Jet"]:
        m = min(self.order, other.order)
        return self.truncate(m), other.truncate(m)

    def __add__(self, other):
        if isinstance(other, Jet):
            if len(self.coeffs) == len(other.coeffs):
                return Jet._wrap(tuple(x + y for x, y in zip(self.coeffs, other.coeffs)), self.n)
            a, b = self._align(other)
            return Jet([x + y for x, y in zip(a.coeffs, b.coeffs)], self.n)
        cs = list(self.coeffs)
        cs[0] = cs[0] + other
        return Jet(cs, self.n)

    __radd__ = __add__

    def __neg__(self):
        return Jet._wrap(tuple(-c for c in self.coeffs), self.n)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            if not self.shape and not other.shape:
                return _scalar_product(self, other)
            return einsum("...,...->...", self, other)
        return Jet([c * other for c in self.coeffs], self.n)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.apply(*_reciprocal(other.value))
        return Jet([c / other for c in self.coeffs], self.n)

    # -- nonlinear ------------------------------------------------------------
    def apply(self, *derivs: np.ndarray) -> "Jet":
        """Compose an elementwise function with this jet.

        ``derivs`` are the function's value and its first ``order`` derivatives
        evaluated at ``self.value`` (Faa di Bruno up to third order).
        """
        f = self.coeffs
        k = self.order
        cs = [np.asarray(derivs[0], dtype=float)]
        if k >= 1:
            p1 = derivs[1][..., None]
            cs.append(p1 * f[1])
        if k >= 2:
            p2 = derivs[2][..., None, None]
            p1 = derivs[1][..., None, None]
            outer = f[1][..., :, None] * f[1][..., None, :]
            cs.append(p2 * outer + p1 * f[2])
        if k >= 3:
            p3 = derivs[3][..., None, None, None]
            p2 = derivs[2][..., None, None, None]
            p1 = derivs[1][..., None, None, None]
            a, b = f[1], f[2]
            o3 = a[..., :, None, None] * a[..., None, :, None] * a[..., None, None, :]
            mix = (b[..., :, :, None] * a[..., None, None, :]
                   + b[..., :, None, :] * a[..., None, :, None]
                   + b[..., None, :, :] * a[..., :, None, None])
            cs.append(p3 * o3 + p2 * mix + p1 * f[3])
        return Jet(cs, self.n)

    def inv(self) -> "Jet":
        """Matrix inverse of a square-matrix-valued jet (last two value axes)."""
        if len(self.shape) != 2:
            raise ValueError("inv() needs a matrix-valued jet")
        b0 = np.linalg.inv(self.value)
        out = Jet([b0], self.n)
        for m in range(1, self.order + 1):
            partial = _leibniz(self, out, ([0, 1], [1, 2]), [0, 2], m, range(1, m + 1))
            bm = -np.einsum("ij,jk...->ik...", b0, partial)
            out = Jet(out.coeffs + (bm,), self.n)
        return out

    def mirrored(self) -> "Jet":
        """Copy whose derivative tensors are exactly symmetric (bitwise)."""
        cs = [self.coeffs[0]]
        for m in range(1, self.order + 1):
            cs.append(_mirror(self.coeffs[m], self.n, m))
        return Jet(cs, self.n)

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, order={self.order}, n={self.n})"


def _scalar_product(a: Jet, b: Jet) -> Jet:
    """Leibniz rule written out for scalar jets (the hot path of expression jets)."""
    m = min(a.order, b.order)
    x, y = a.coeffs, b.coeffs
    cs = [x[0] * y[0]]
    if m >= 1:
        cs.append(x[0] * y[1] + y[0] * x[1])
    if m >= 2:
        o = np.multiply.outer(x[1], y[1])
        cs.append(x[0] * y[2] + y[0] * x[2] + o + o.T)
    if m >= 3:
        t = np.multiply.outer(x[1], y[2]) + np.multiply.outer(y[1], x[2])  # [i, j, k]: first factor at i
        cs.append(x[0] * y[3] + y[0] * x[3] + t + t.transpose(1, 0, 2) + t.transpose(1, 2, 0))
    return Jet._wrap(tuple(np.asarray(c, dtype=float) for c in cs), a.n)


def _reciprocal(x: np.ndarray):
    x = np.asarray(x, dtype=float)
    return 1.0 / x, -1.0 / x**2, 2.0 / x**3, -6.0 / x**4


_MIRROR_CACHE: dict[tuple[int, int], tuple[np.ndarray, ...]] = {}


def _mirror(a: np.ndarray, n: int, m: int) -> np.ndarray:
    if m == 1:
        return a
    key = (n, m)
    if key not in _MIRROR_CACHE:
        grid = np.indices((n,) * m).reshape(m, -1)
        _MIRROR_CACHE[key] = tuple(np.sort(grid, axis=0))
    idx = _MIRROR_CACHE[key]
    lead = a.shape[: a.ndim - m]
    flat = a.reshape(lead + (-1,))
    lin = np.ravel_multi_index(idx, (n,) * m)
    return flat[..., lin].reshape(a.shape)


def _leibniz(a: Jet, b: Jet, subs, out_sub, m: int, s_range) -> np.ndarray:
    """Sum of order-m Leibniz terms where ``a`` carries s derivatives, s in s_range."""
    sa, sb = subs
    total = None
    for s in s_range:
        if s > a.order or m - s > b.order:
            continue
        base = np.einsum(a.coeffs[s], list(sa) + list(_DLAB[:s]),
                         b.coeffs[m - s], list(sb) + list(_DLAB[s:m]),
                         list(out_sub) + list(_DLAB[:m]))
        lead = list(range(base.ndim - m))
        for perm in _shuffles(m, s):
            term = base.transpose(lead + [len(lead) + p for p in perm]) if m else base
            total = term if total is None else total + term
    return total


def einsum(spec: str, a: Jet, b: Jet) -> Jet:
    """Contract two jets with an einsum-style spec (letters a-z, optional '...')."""
    if "..." in spec:
        # elementwise broadcast over leading axes; only equal shapes supported
        k = max(len(a.shape), len(b.shape))
        letters = "".join(chr(ord("a") + i) for i in range(k))
        spec = spec.replace("...", letters)
    subs, out_sub = _parse_spec(spec)
    m_top = min(a.order, b.order)
    cs = [_leibniz(a, b, subs, out_sub, m, range(0, m + 1)) for m in range(m_top + 1)]
    return Jet(cs, a.n)


def contract_const(spec: str, a: Jet, const: np.ndarray) -> Jet:
    """Contract a jet with a constant array (no derivative contribution)."""
    subs, out_sub = _parse_spec(spec)
    cs = []
    for m, c in enumerate(a.coeffs):
        cs.append(np.einsum(c, subs[0] + list(_DLAB[:m]), const, subs[1],
                            out_sub + list(_DLAB[:m])))
    return Jet(cs, a.n)


def elementwise(fn: Callable[[np.ndarray], tuple], jet: Jet) -> Jet:
    return jet.apply(*fn(jet.value))
