"""Exact arithmetic in the real quadratic field Q(sqrt 2).

Elements are stored as ``a + b*sqrt(2)`` with rational ``a`` and ``b``.
Ordering is exact: the sign of ``a + b*sqrt(2)`` is decided by comparing
``a**2`` against ``2*b**2`` when the two parts disagree in sign.
"""
from __future__ import annotations

import math
import re
from fractions import Fraction
from numbers import Rational

__all__ = ["QField", "SQRT2", "as_qfield"]

_SCALARS = (int, Fraction)


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, Rational):
        return Fraction(x.numerator, x.denominator)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"cannot convert {type(x).__name__} to an exact rational")


class QField:
    """An element ``a + b*sqrt(2)`` of Q(sqrt 2)."""

    __slots__ = ("a", "b")

    def __init__(self, a=0, b=0):
        self.a = _frac(a)
        self.b = _frac(b)

    @classmethod
    def _raw(cls, a: Fraction, b: Fraction) -> "QField":
        obj = object.__new__(cls)
        obj.a = a
        obj.b = b
        return obj

    # ---- conversion -------------------------------------------------
    def __float__(self) -> float:
        return float(self.a) + float(self.b) * math.sqrt(2.0)

    def __bool__(self) -> bool:
        return bool(self.a) or bool(self.b)

    def is_rational(self) -> bool:
        return self.b == 0

    def conjugate(self) -> "QField":
        return QField._raw(self.a, -self.b)

    def norm(self) -> Fraction:
        """Field norm ``a**2 - 2*b**2`` (nonzero for nonzero elements)."""
        return self.a * self.a - 2 * self.b * self.b

    def sign(self) -> int:
        a, b = self.a, self.b
        sa = (a > 0) - (a < 0)
        sb = (b > 0) - (b < 0)
        if sb == 0:
            return sa
        if sa == 0 or sa == sb:
            return sb
        # parts disagree: the larger magnitude wins
        if a * a > 2 * b * b:
            return sa
        return sb

    # ---- arithmetic -------------------------------------------------
    def __add__(self, other):
        if isinstance(other, QField):
            return QField._raw(self.a + other.a, self.b + other.b)
        if isinstance(other, _SCALARS):
            return QField._raw(self.a + other, self.b)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, QField):
            return QField._raw(self.a - other.a, self.b - other.b)
        if isinstance(other, _SCALARS):
            return QField._raw(self.a - other, self.b)
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, _SCALARS):
            return QField._raw(other - self.a, -self.b)
        return NotImplemented

    def __neg__(self):
        return QField._raw(-self.a, -self.b)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if isinstance(other, QField):
            a, b, c, d = self.a, self.b, other.a, other.b
            if not d:
                return QField._raw(a * c, b * c)
            if not b:
                return QField._raw(a * c, a * d)
            return QField._raw(a * c + 2 * b * d, a * d + b * c)
        if isinstance(other, _SCALARS):
            return QField._raw(self.a * other, self.b * other)
        return NotImplemented

    __rmul__ = __mul__

    def inverse(self) -> "QField":
        if not self:
            raise ZeroDivisionError("QField division by zero")
        if not self.b:
            return QField._raw(1 / self.a, Fraction(0))
        n = self.norm()
        return QField._raw(self.a / n, -self.b / n)

    def __truediv__(self, other):
        if isinstance(other, QField):
            if not other.b:
                return QField._raw(self.a / other.a, self.b / other.a)
            return self * other.inverse()
        if isinstance(other, _SCALARS):
            return QField._raw(self.a / other, self.b / other)
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, _SCALARS):
            return QField(other) * self.inverse()
        return NotImplemented

    # ---- comparison -------------------------------------------------
    def __eq__(self, other):
        if isinstance(other, QField):
            return self.a == other.a and self.b == other.b
        if isinstance(other, _SCALARS):
            return not self.b and self.a == other
        if isinstance(other, float):
            return float(self) == other
        return NotImplemented

    def __hash__(self):
        if not self.b:
            return hash(self.a)
        return hash((self.a, self.b))

    def _cmp(self, other) -> int:
        if isinstance(other, QField):
            return (self - other).sign()
        if isinstance(other, _SCALARS):
            return (self - other).sign()
        if isinstance(other, float):
            f = float(self)
            return (f > other) - (f < other)
        raise TypeError

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __abs__(self):
        return -self if self.sign() < 0 else self

    # ---- text / json ------------------------------------------------
    def __repr__(self) -> str:
        return f"QField({self})"

    def __str__(self) -> str:
        if not self.b:
            return str(self.a)
        if not self.a:
            return f"{self.b}√2"
        sign = "+" if self.b > 0 else "-"
        return f"{self.a}{sign}{abs(self.b)}√2"

    def to_json(self) -> dict:
        return {"a": str(self.a), "b": str(self.b)}

    @classmethod
    def from_json(cls, obj) -> "QField":
        if isinstance(obj, dict):
            return cls(Fraction(obj["a"]), Fraction(obj.get("b", "0")))
        if isinstance(obj, str):
            return cls.parse(obj)
        if isinstance(obj, int):
            return cls(obj)
        raise TypeError(f"not an exact QField encoding: {obj!r}")

    _TERM = re.compile(r"([+-]?)\s*([0-9]+(?:/[0-9]+)?)?\s*(√2|sqrt2|r2)?")

    @classmethod
    def parse(cls, text: str) -> "QField":
        """Parse ``"p/q"``, ``"p/q+r/s√2"`` or ``"r/s√2"``."""
        src = text.strip()
        if not src:
            raise ValueError("cannot parse an empty string as an element of Q(sqrt 2)")
        a = b = Fraction(0)
        seen_a = seen_b = False
        pos = 0
        while pos < len(src):
            m = cls._TERM.match(src, pos)
            if not m or m.end() == pos or not (m.group(2) or m.group(3)):
                raise ValueError(f"cannot parse {text!r} as an element of Q(sqrt 2)")
            sgn = -1 if m.group(1) == "-" else 1
            if pos and not m.group(1):
                raise ValueError(f"cannot parse {text!r} as an element of Q(sqrt 2)")
            coef = Fraction(m.group(2)) if m.group(2) else Fraction(1)
            if m.group(3):
                if seen_b:
                    raise ValueError(f"repeated sqrt term in {text!r}")
                b, seen_b = sgn * coef, True
            else:
                if seen_a:
                    raise ValueError(f"repeated rational term in {text!r}")
                a, seen_a = sgn * coef, True
            pos = m.end()
            while pos < len(src) and src[pos].isspace():
                pos += 1
        return cls(a, b)


SQRT2 = QField(0, 1)


def as_qfield(x) -> QField:
    if isinstance(x, QField):
        return x
    if isinstance(x, float):
        raise TypeError("floats are not exact; refusing to convert to QField")
    return QField(x)
