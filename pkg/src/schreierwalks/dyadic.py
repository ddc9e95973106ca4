"""Exact dyadic rationals ``a / 2**b``."""

from __future__ import annotations

import re
from fractions import Fraction
from functools import total_ordering

_PATTERN = re.compile(r"^\s*(-?\d+)\s*/\s*(?:2\^(\d+)|(\d+))\s*$")


@total_ordering
class DyadicRational:
    """A number ``numerator / 2**exponent`` kept in canonical form.

    Canonical form means the numerator is odd, or the value is zero and then
    ``numerator == exponent == 0``. Both fields are Python ints, so there is
    no bound on the exponent.
    """

    __slots__ = ("numerator", "exponent")

    def __init__(self, numerator: int, exponent: int = 0):
        numerator = int(numerator)
        exponent = int(exponent)
        if exponent < 0:
            numerator <<= -exponent
            exponent = 0
        if numerator == 0:
            exponent = 0
        else:
            tz = (numerator & -numerator).bit_length() - 1
            tz = min(tz, exponent)
            numerator >>= tz
            exponent -= tz
        object.__setattr__(self, "numerator", numerator)
        object.__setattr__(self, "exponent", exponent)

    def __setattr__(self, name, value):
        raise AttributeError("DyadicRational is immutable")

    @classmethod
    def parse(cls, text: str) -> "DyadicRational":
        """Parse ``"13/2^4"`` or ``"13/16"``."""
        m = _PATTERN.match(text)
        if m is None:
            raise ValueError(f"not a dyadic rational: {text!r}")
        num = int(m.group(1))
        if m.group(2) is not None:
            return cls(num, int(m.group(2)))
        den = int(m.group(3))
        if den <= 0 or den & (den - 1):
            raise ValueError(f"denominator is not a power of two: {text!r}")
        return cls(num, den.bit_length() - 1)

    @classmethod
    def from_fraction(cls, value) -> "DyadicRational":
        value = Fraction(value)
        den = value.denominator
        if den & (den - 1):
            raise ValueError(f"{value} is not dyadic")
        return cls(value.numerator, den.bit_length() - 1)

    def to_fraction(self) -> Fraction:
        return Fraction(self.numerator, 1 << self.exponent)

    def __float__(self) -> float:
        return float(self.to_fraction())

    def in_unit_interval(self) -> bool:
        """True iff ``0 < self < 1``."""
        return 0 < self.numerator < (1 << self.exponent)

    def binary_digits(self) -> str:
        """Digits after the binary point, for values in ``(0, 1)``."""
        if not self.in_unit_interval():
            raise ValueError(f"{self} is not in (0, 1)")
        return format(self.numerator, "b").zfill(self.exponent)

    @classmethod
    def from_binary_digits(cls, digits: str) -> "DyadicRational":
        return cls(int(digits, 2), len(digits))

    def __eq__(self, other):
        if isinstance(other, DyadicRational):
            return self.numerator == other.numerator and self.exponent == other.exponent
        if isinstance(other, (int, Fraction)):
            return self.to_fraction() == other
        return NotImplemented

    def __lt__(self, other):
        if isinstance(other, DyadicRational):
            e = max(self.exponent, other.exponent)
            return (self.numerator << (e - self.exponent)) < (other.numerator << (e - other.exponent))
        if isinstance(other, (int, Fraction)):
            return self.to_fraction() < other
        return NotImplemented

    def __hash__(self):
        return hash((self.numerator, self.exponent))

    def __add__(self, other):
        other = _coerce(other)
        e = max(self.exponent, other.exponent)
        return DyadicRational(
            (self.numerator << (e - self.exponent)) + (other.numerator << (e - other.exponent)), e
        )

    def __neg__(self):
        return DyadicRational(-self.numerator, self.exponent)

    def __sub__(self, other):
        return self + (-_coerce(other))

    def half(self) -> "DyadicRational":
        return DyadicRational(self.numerator, self.exponent + 1)

    def double(self) -> "DyadicRational":
        return DyadicRational(self.numerator, self.exponent - 1)

    def __str__(self):
        return f"{self.numerator}/2^{self.exponent}"

    def __repr__(self):
        return f"DyadicRational({self.numerator}, {self.exponent})"

    def __reduce__(self):
        return (DyadicRational, (self.numerator, self.exponent))


def _coerce(x) -> DyadicRational:
    if isinstance(x, DyadicRational):
        return x
    if isinstance(x, int):
        return DyadicRational(x, 0)
    return DyadicRational.from_fraction(x)


def dyadic(text_or_num, exponent: int | None = None) -> DyadicRational:
    """Shorthand: ``dyadic("13/16")``, ``dyadic(13, 4)``."""
    if exponent is not None:
        return DyadicRational(text_or_num, exponent)
    if isinstance(text_or_num, str):
        return DyadicRational.parse(text_or_num)
    return _coerce(text_or_num)
