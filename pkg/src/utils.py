"""
Small helpers for exact rational numbers shared across modules
"""

import math
import re
from fractions import Fraction
from typing import Union

_FRACTION_RE = re.compile(r"^\s*(\d+)\s*(?:/\s*(\d+))?\s*$")
_DECIMAL_RE = re.compile(r"^\s*\d*\.\d+\s*$")


def parse_fraction(text: str, allow_decimal: bool = True) -> Fraction:
    """
    Parse ``p/q``, an integer, or (optionally) a decimal literal exactly.

    Decimal literals are converted through their digit string, so ``0.9``
    becomes exactly 9/10 and never passes through a binary float.
    """
    match = _FRACTION_RE.match(text)
    if match:
        numerator, denominator = match.groups()
        if denominator is not None and int(denominator) == 0:
            raise ValueError(f"zero denominator in {text!r}")
        return Fraction(int(numerator), int(denominator or 1))
    if allow_decimal and _DECIMAL_RE.match(text):
        return Fraction(text.strip())
    raise ValueError(f"not an exact rational: {text!r}")


def format_fraction(value: Union[Fraction, int]) -> str:
    """Render a rational as ``p/q`` (or ``p`` when integral)."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def floor_dyadic(value: Fraction, bits: int) -> Fraction:
    scale = 1 << bits
    return Fraction(math.floor(value * scale), scale)


def ceil_dyadic(value: Fraction, bits: int) -> Fraction:
    scale = 1 << bits
    return Fraction(math.ceil(value * scale), scale)
