import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from latent_layers.qfield import SQRT2, QField

fracs = st.fractions(min_value=-50, max_value=50, max_denominator=50)
elements = st.builds(QField, fracs, fracs)


def test_sqrt2_squares_to_two():
    assert SQRT2 * SQRT2 == 2
    assert (1 + SQRT2) * (SQRT2 - 1) == 1


@given(elements, elements)
def test_ring_operations_match_floats(x, y):
    assert math.isclose(float(x + y), float(x) + float(y), abs_tol=1e-9)
    assert math.isclose(float(x * y), float(x) * float(y), rel_tol=1e-9, abs_tol=1e-9)


@given(elements)
def test_inverse(x):
    if x:
        assert x * x.inverse() == 1
        assert x / x == 1


@given(elements, elements)
def test_ordering_matches_floats(x, y):
    # exact comparison must agree with floats whenever the gap is visible
    if abs(float(x) - float(y)) > 1e-9:
        assert (x < y) == (float(x) < float(y))
    assert (x == y) == (not (x - y))


@given(elements)
def test_sign_matches_floats(x):
    if abs(float(x)) > 1e-9:
        assert x.sign() == (1 if float(x) > 0 else -1)
    assert (x.sign() == 0) == (not x)


def test_sign_of_tiny_difference():
    x = QField(Fraction(665857, 470832)) - SQRT2  # Pell convergent, ~1.6e-12
    assert x.sign() == 1
    assert (-x).sign() == -1


@given(elements)
def test_json_and_text_round_trip(x):
    assert QField.from_json(x.to_json()) == x
    assert QField.parse(str(x)) == x


def test_parse_forms():
    assert QField.parse("2+2√2") == QField(2, 2)
    assert QField.parse("-1/2+1/2√2") == QField(Fraction(-1, 2), Fraction(1, 2))
    assert QField.parse("3") == 3


def test_division_by_zero():
    with pytest.raises(ZeroDivisionError):
        QField(1) / QField(0)
