"""Exact real numbers of the form  q1*sqrt(r1) + q2*sqrt(r2) + ...

Each radicand is a square-free positive integer and each coefficient a
``Fraction``.  The set is closed under addition, negation and
multiplication, which is all that state preparation, projectors and Born
weights need when every input coefficient is a rational times the square
root of a rational.  A single-term value is the usual ``q*sqrt(r)``
amplitude literal.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from typing import Union

Number = Union[int, Fraction, "Surd"]


@lru_cache(maxsize=4096)
def squarefree_split(n: int) -> tuple[int, int]:
    """Return ``(k, s)`` with ``n == k*k*s`` and ``s`` square-free."""
    if n <= 0:
        raise ValueError(f"radicand must be positive, got {n}")
    k, s = 1, 1
    m = n
    p = 2
    while p * p <= m:
        e = 0
        while m % p == 0:
            m //= p
            e += 1
        k *= p ** (e // 2)
        if e % 2:
            s *= p
        p += 1
    return k, s * m


class Surd:
    __slots__ = ("_terms", "_hash")

    def __init__(self, value: int | Fraction = 0, radicand: int | Fraction = 1):
        q = Fraction(value)
        r = Fraction(radicand)
        if r < 0:
            raise ValueError("negative radicand: only real amplitudes are exact")
        terms: dict[int, Fraction] = {}
        if q != 0 and r != 0:
            # sqrt(n/d) = sqrt(n*d)/d
            k, s = squarefree_split(r.numerator * r.denominator)
            terms[s] = q * k / r.denominator
        self._terms = terms
        self._hash = None

    @classmethod
    def _from_terms(cls, terms: dict[int, Fraction]) -> Surd:
        out = cls.__new__(cls)
        out._terms = {s: c for s, c in terms.items() if c != 0}
        out._hash = None
        return out

    @classmethod
    def sqrt(cls, value: int | Fraction) -> Surd:
        return cls(1, value)

    @classmethod
    def coerce(cls, value: Number) -> Surd:
        if isinstance(value, Surd):
            return value
        if isinstance(value, (int, Fraction)):
            return cls(value)
        raise TypeError(f"cannot represent {value!r} exactly")

    @property
    def terms(self) -> dict[int, Fraction]:
        return dict(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_rational(self) -> bool:
        return all(s == 1 for s in self._terms)

    def is_monomial(self) -> bool:
        return len(self._terms) <= 1

    def to_fraction(self) -> Fraction:
        if not self.is_rational():
            raise ValueError(f"{self} is irrational")
        return self._terms.get(1, Fraction(0))

    def __float__(self) -> float:
        return float(sum(float(c) * math.sqrt(s) for s, c in sorted(self._terms.items())))

    def __add__(self, other: Number) -> Surd:
        try:
            other = Surd.coerce(other)
        except TypeError:
            return NotImplemented
        terms = dict(self._terms)
        for s, c in other._terms.items():
            terms[s] = terms.get(s, Fraction(0)) + c
        return Surd._from_terms(terms)

    __radd__ = __add__

    def __neg__(self) -> Surd:
        return Surd._from_terms({s: -c for s, c in self._terms.items()})

    def __sub__(self, other: Number) -> Surd:
        try:
            return self + (-Surd.coerce(other))
        except TypeError:
            return NotImplemented

    def __rsub__(self, other: Number) -> Surd:
        return Surd.coerce(other) - self

    def __mul__(self, other: Number) -> Surd:
        try:
            other = Surd.coerce(other)
        except TypeError:
            return NotImplemented
        terms: dict[int, Fraction] = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                # a, b square-free: sqrt(a*b) = g*sqrt((a/g)*(b/g))
                g = math.gcd(a, b)
                s = (a // g) * (b // g)
                terms[s] = terms.get(s, Fraction(0)) + ca * cb * g
        return Surd._from_terms(terms)

    __rmul__ = __mul__

    def inverse(self) -> Surd:
        if not self._terms:
            raise ZeroDivisionError("inverse of exact zero")
        if len(self._terms) != 1:
            raise ValueError(f"cannot invert multi-term surd {self} exactly")
        ((s, c),) = self._terms.items()
        return Surd._from_terms({s: 1 / (c * s)})

    def __truediv__(self, other: Number) -> Surd:
        return self * Surd.coerce(other).inverse()

    def __rtruediv__(self, other: Number) -> Surd:
        return Surd.coerce(other) * self.inverse()

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, Fraction)):
            other = Surd(other)
        if not isinstance(other, Surd):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"Surd({self})"

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for i, (s, c) in enumerate(sorted(self._terms.items())):
            text = _format_term(abs(c), s)
            if i == 0:
                parts.append(("-" if c < 0 else "") + text)
            else:
                parts.append((" - " if c < 0 else " + ") + text)
        return "".join(parts)


def _format_term(c: Fraction, s: int) -> str:
    if s == 1:
        return str(c)
    a, b = c.numerator, c.denominator
    # prefer the 1/sqrt(n) spelling used for normalisation constants
    if a == 1 and (b * b) % s == 0:
        return f"1/√{b * b // s}"
    head = f"√{s}" if a == 1 else f"{a}√{s}"
    return head if b == 1 else f"{head}/{b}"
