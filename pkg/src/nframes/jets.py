"""Truncated bivariate Taylor arithmetic.

A ``Jet`` stores the Taylor coefficients of a field in two variables (u, v)
up to a fixed total degree, vectorized over an arbitrary trailing shape.
Arithmetic on jets propagates exact derivatives, so a surface written once
as a formula yields its position and all partials up to the jet order.

Functions in this module (``sin``, ``sqrt``, ...) dispatch on type, so the
same formula also evaluates on plain floats and numpy arrays.
"""
from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np


@lru_cache(maxsize=None)
def monomials(order: int) -> tuple[tuple[int, int], ...]:
    return tuple((a, k - a) for k in range(order + 1) for a in range(k, -1, -1))


@lru_cache(maxsize=None)
def _index(order: int) -> dict:
    return {m: i for i, m in enumerate(monomials(order))}


@lru_cache(maxsize=None)
def _product_table(order: int):
    mons = monomials(order)
    idx = _index(order)
    table = []
    for p, (a1, b1) in enumerate(mons):
        for q, (a2, b2) in enumerate(mons):
            if a1 + b1 + a2 + b2 <= order:
                table.append((idx[(a1 + a2, b1 + b2)], p, q))
    return tuple(table)


class Jet:
    """Taylor coefficients ``c[m]`` of ``sum c[m] du^a dv^b`` for monomials m=(a, b)."""

    __array_ufunc__ = None

    def __init__(self, coeffs, order: int):
        self.c = np.asarray(coeffs, dtype=float)
        self.order = order
        if self.c.shape[0] != len(monomials(order)):
            raise ValueError("coefficient count does not match jet order")

    # construction
    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((len(monomials(order)),) + value.shape)
        c[0] = value
        return cls(c, order)

    @classmethod
    def variables(cls, u0, v0, order: int) -> tuple["Jet", "Jet"]:
        u0, v0 = np.broadcast_arrays(np.asarray(u0, float), np.asarray(v0, float))
        u = cls.constant(u0, order)
        v = cls.constant(v0, order)
        if order >= 1:
            idx = _index(order)
            u.c[idx[(1, 0)]] = 1.0
            v.c[idx[(0, 1)]] = 1.0
        return u, v

    # access
    @property
    def shape(self):
        return self.c.shape[1:]

    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    def deriv(self, a: int, b: int) -> np.ndarray:
        """Partial derivative d^a/du^a d^b/dv^b at the expansion point."""
        return self.c[_index(self.order)[(a, b)]] * (factorial(a) * factorial(b))

    def diff(self, var: int) -> "Jet":
        """Derivative as a jet one order lower (var 0 = u, 1 = v)."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        lo = self.order - 1
        idx = _index(self.order)
        out = np.empty((len(monomials(lo)),) + self.shape)
        for m, (a, b) in enumerate(monomials(lo)):
            if var == 0:
                out[m] = (a + 1) * self.c[idx[(a + 1, b)]]
            else:
                out[m] = (b + 1) * self.c[idx[(a, b + 1)]]
        return Jet(out, lo)

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError("cannot raise jet order")
        return Jet(self.c[: len(monomials(order))], order)

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.c[(slice(None),) + key], self.order)

    def __len__(self):
        return self.shape[0]

    # arithmetic
    def _coerce(self, other):
        if not isinstance(other, Jet):
            other = Jet.constant(other, self.order)
        a, b = self, other
        if a.order != b.order:
            lo = min(a.order, b.order)
            a, b = a.truncate(lo), b.truncate(lo)
        # pad trailing shapes so the leading coefficient axis lines up
        nd = max(len(a.shape), len(b.shape))
        if len(a.shape) < nd:
            a = Jet(a.c.reshape((a.c.shape[0],) + (1,) * (nd - len(a.shape)) + a.shape), a.order)
        if len(b.shape) < nd:
            b = Jet(b.c.reshape((b.c.shape[0],) + (1,) * (nd - len(b.shape)) + b.shape), b.order)
        return a, b

    def __add__(self, other):
        a, b = self._coerce(other)
        return Jet(a.c + b.c, a.order)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self._coerce(other)
        return Jet(a.c - b.c, a.order)

    def __rsub__(self, other):
        a, b = self._coerce(other)
        return Jet(b.c - a.c, a.order)

    def __neg__(self):
        return Jet(-self.c, self.order)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            if other.ndim <= len(self.shape):
                return Jet(self.c * other, self.order)
        a, b = self._coerce(other)
        shape = np.broadcast_shapes(a.shape, b.shape)
        out = np.zeros((a.c.shape[0],) + shape)
        for m, p, q in _product_table(a.order):
            out[m] += a.c[p] * b.c[q]
        return Jet(out, a.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * power(other, -1.0)

    def __rtruediv__(self, other):
        return power(self, -1.0) * other

    def __pow__(self, p):
        if isinstance(p, int) and p >= 0:
            out = Jet.constant(np.ones(self.shape), self.order)
            for _ in range(p):
                out = out * self
            return out
        return power(self, float(p))

    def __repr__(self):
        return f"Jet(order={self.order}, shape={self.shape})"


def _compose(x: Jet, derivs) -> Jet:
    """f(x) from the derivative values f^(k)(x0), k = 0..order."""
    h = Jet(x.c.copy(), x.order)
    h.c[0] = 0.0
    out = Jet.constant(derivs[0], x.order)
    hk = None
    for k in range(1, x.order + 1):
        hk = h if hk is None else hk * h
        out = out + hk * (derivs[k] / factorial(k))
    return out


def power(x, p: float):
    if not isinstance(x, Jet):
        return np.asarray(x, dtype=float) ** p
    x0 = x.value
    derivs = []
    coef = 1.0
    for k in range(x.order + 1):
        derivs.append(coef * x0 ** (p - k))
        coef *= p - k
    return _compose(x, derivs)


def sqrt(x):
    return power(x, 0.5) if isinstance(x, Jet) else np.sqrt(x)


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    e = np.exp(x.value)
    return _compose(x, [e] * (x.order + 1))


def log(x):
    if not isinstance(x, Jet):
        return np.log(x)
    x0 = x.value
    derivs = [np.log(x0)] + [(-1.0) ** (k - 1) * factorial(k - 1) / x0**k for k in range(1, x.order + 1)]
    return _compose(x, derivs)


def sin(x):
    if not isinstance(x, Jet):
        return np.sin(x)
    s, c = np.sin(x.value), np.cos(x.value)
    cycle = [s, c, -s, -c]
    return _compose(x, [cycle[k % 4] for k in range(x.order + 1)])


def cos(x):
    if not isinstance(x, Jet):
        return np.cos(x)
    s, c = np.sin(x.value), np.cos(x.value)
    cycle = [c, -s, -c, s]
    return _compose(x, [cycle[k % 4] for k in range(x.order + 1)])


def stack(items, axis: int = -1):
    """Stack scalars (jets or arrays) along a new component axis."""
    if any(isinstance(it, Jet) for it in items):
        order = min(it.order for it in items if isinstance(it, Jet))
        ref = next(it for it in items if isinstance(it, Jet))
        jets = []
        for it in items:
            if not isinstance(it, Jet):
                it = Jet.constant(np.broadcast_to(np.asarray(it, float), ref.shape), order)
            jets.append(it.truncate(order))
        shape = np.broadcast_shapes(*(j.shape for j in jets))
        cs = [np.broadcast_to(j.c, (j.c.shape[0],) + shape) for j in jets]
        ax = axis if axis < 0 else axis + 1
        return Jet(np.stack(cs, axis=ax), order)
    arrays = np.broadcast_arrays(*[np.asarray(it, dtype=float) for it in items])
    return np.stack(arrays, axis=axis)


def einsum(subscripts: str, a, b):
    """Bilinear contraction of two jets (or a jet with a plain array)."""
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return np.einsum(subscripts, a, b)
    if not isinstance(a, Jet):
        return Jet(np.stack([np.einsum(subscripts, a, bc) for bc in b.c]), b.order)
    if not isinstance(b, Jet):
        return Jet(np.stack([np.einsum(subscripts, ac, b) for ac in a.c]), a.order)
    if a.order != b.order:
        lo = min(a.order, b.order)
        a, b = a.truncate(lo), b.truncate(lo)
    out = [None] * a.c.shape[0]
    for m, p, q in _product_table(a.order):
        term = np.einsum(subscripts, a.c[p], b.c[q])
        out[m] = term if out[m] is None else out[m] + term
    return Jet(np.stack(out), a.order)


def dot(a, b):
    """Inner product over the last axis."""
    return einsum("...k,...k->...", a, b)


def swap_last(a):
    """Transpose of the last two axes."""
    if isinstance(a, Jet):
        return Jet(np.swapaxes(a.c, -1, -2), a.order)
    return np.swapaxes(a, -1, -2)
