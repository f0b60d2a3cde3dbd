"""Exact rational helpers shared by every module.

Rationals travel through files and traces as strings: ``"25/8"``, ``"-1/2"``
or plain integers ``"3"``. Floats are never accepted on input.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Union

Rational = Union[int, Fraction]

_RATIONAL_RE = re.compile(r"^\s*([+-]?\d+)(?:\s*/\s*(\d+))?\s*$")


def parse_rational(value: object) -> Fraction:
    """Parse ``"p/q"``, ``"p"`` or an ``int`` into a Fraction.

    Raises ValueError for floats, decimals and anything else.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, Fraction):
        return value
    if not isinstance(value, str):
        raise ValueError(f"rationals must be strings like '3/4', got {value!r}")
    match = _RATIONAL_RE.match(value)
    if match is None:
        raise ValueError(f"not a rational string: {value!r}")
    num, den = match.group(1), match.group(2)
    if den is not None and int(den) == 0:
        raise ValueError(f"zero denominator: {value!r}")
    return Fraction(int(num), int(den) if den is not None else 1)


def fmt(value: Rational) -> str:
    """Exact string form: ``"25/8"`` or ``"3"``."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def fmt_decimal(value: Rational, places: int = 6) -> str:
    """Fixed-point decimal rendering, rounded half-even at ``places`` digits."""
    value = Fraction(value)
    scaled = round(value * 10**places)
    sign = "-" if scaled < 0 else ""
    scaled = abs(scaled)
    whole, frac = divmod(scaled, 10**places)
    return f"{sign}{whole}.{frac:0{places}d}"

