import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from wigner_lab.exact import Surd, squarefree_split


@pytest.mark.parametrize("n,k,s", [(1, 1, 1), (12, 2, 3), (18, 3, 2), (7, 1, 7), (72, 6, 2)])
def test_squarefree_split(n, k, s):
    assert squarefree_split(n) == (k, s)


def test_rational_radicand_normalizes():
    # sqrt(2/3) = sqrt(6)/3
    assert Surd.sqrt(Fraction(2, 3)) == Surd(Fraction(1, 3), 6)
    assert Surd.sqrt(4) == 2
    assert Surd.sqrt(Fraction(1, 12)) * Surd.sqrt(Fraction(1, 12)) == Fraction(1, 12)


def test_protocol_coefficients_square_to_twelfths():
    coeffs = [Surd.sqrt(Fraction(1, 3)), Surd.sqrt(Fraction(2, 3)), Surd.sqrt(Fraction(1, 2)),
              Surd.sqrt(Fraction(1, 6)), Surd.sqrt(Fraction(1, 12)), Surd(Fraction(1, 2), 3),
              2 * Surd.sqrt(Fraction(1, 12))]
    for c in coeffs:
        sq = (c * c).to_fraction()
        assert 12 % sq.denominator == 0
        assert abs(float(c) ** 2 - float(sq)) < 1e-10


def test_formatting():
    assert str(Surd.sqrt(Fraction(1, 2))) == "1/√2"
    assert str(Surd(Fraction(1, 2), 3)) == "√3/2"
    assert str(Surd.sqrt(Fraction(1, 12))) == "1/√12"
    assert str(-Surd(3)) == "-3"
    assert str(Surd(0)) == "0"
    assert str(Surd(1) + Surd.sqrt(2)) == "1 + √2"


def test_division_and_errors():
    a = Surd.sqrt(6)
    assert a / Surd.sqrt(2) == Surd.sqrt(3)
    with pytest.raises(ZeroDivisionError):
        Surd(0).inverse()
    with pytest.raises(ValueError):
        (Surd(1) + Surd.sqrt(2)).inverse()
    with pytest.raises(ValueError):
        Surd(1, -2)
    with pytest.raises(ValueError):
        (Surd.sqrt(2)).to_fraction()


rationals = st.fractions(min_value=-20, max_value=20, max_denominator=12)
radicands = st.integers(min_value=1, max_value=30)
surds = st.builds(lambda q, r: Surd(q, r), rationals, radicands)
sums = st.lists(surds, min_size=1, max_size=3).map(lambda xs: sum(xs, Surd(0)))


@given(sums, sums)
def test_arithmetic_matches_floats(a, b):
    assert math.isclose(float(a + b), float(a) + float(b), abs_tol=1e-9)
    assert math.isclose(float(a * b), float(a) * float(b), rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose(float(a - b), float(a) - float(b), abs_tol=1e-9)


@given(sums, sums, sums)
def test_ring_laws(a, b, c):
    assert a * (b + c) == a * b + a * c
    assert (a * b) * c == a * (b * c)
    assert a + b == b + a
    assert a - a == 0


@given(surds)
def test_monomial_inverse(a):
    if a.is_zero():
        return
    assert a * a.inverse() == 1
