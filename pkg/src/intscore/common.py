"""Shared helpers: exact rational arithmetic and JSON-friendly encodings."""

from __future__ import annotations

from fractions import Fraction


def as_fraction(value) -> Fraction:
    """Coerce value to an exact Fraction.

    Floats go through their decimal string form, so ``as_fraction(0.1)``
    is 1/10 rather than the binary float. Strings accept "p/q" and
    decimal forms.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as a rational number")


def frac_str(value: Fraction) -> str:
    """Serialize a Fraction losslessly ("3/5", "2")."""
    return str(value)


def frac_float(value: Fraction) -> float:
    """Nearest float, for display and plotting only."""
    return value.numerator / value.denominator
