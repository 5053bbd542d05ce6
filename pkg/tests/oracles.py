"""Reference implementations that share no code with the package.

Everything here works in exact rational arithmetic or by brute force over
the 256 E4M3 values, so agreement with the package is evidence rather than
a tautology.
"""
from __future__ import annotations

from collections import Counter
from fractions import Fraction
from functools import lru_cache

PRODUCT_MAX = Fraction(15 * 32)
CUTOFF = Fraction(1, 512)


def e4m3_value(bits: int) -> Fraction | None:
    """Exact value from the format definition; None for NaN."""
    s, e, m = bits >> 7, (bits >> 3) & 15, bits & 7
    if e == 15 and m == 7:
        return None
    v = Fraction(8 + m, 1) * Fraction(2) ** (e - 10) if e else Fraction(m, 512)
    return -v if s else v


@lru_cache(maxsize=1)
def finite_table() -> list[tuple[Fraction, int]]:
    """(value, pattern) for every finite pattern, sorted by value; -0 omitted."""
    out = [(e4m3_value(b), b) for b in range(256) if e4m3_value(b) is not None and b != 0x80]
    return sorted(out)


def nearest_even_encode(x: Fraction, negative: bool | None = None) -> int:
    """Nearest E4M3 pattern by scanning the table; ties go to the even mantissa.

    Saturates at +-448.  A zero result is negative when ``x < 0`` or when
    ``negative`` says so (Fractions cannot carry the sign of -0.0).
    """
    best = None
    for v, b in finite_table():
        d = abs(v - x)
        if best is None or d < best[0] or (d == best[0] and (b & 1) == 0 and best[1] & 1):
            best = (d, b)
    b = best[1]
    if b == 0 and (x < 0 or negative):
        return 0x80
    return b


def round_to_grid(x: Fraction) -> tuple[Fraction, bool]:
    """4-bit significand rounding of a product, ties to even.

    Steps are ``2**-9`` below ``2**-6`` and ``2**(k-3)`` on ``[2**k, 2**(k+1))``.
    Magnitudes below ``2**-9`` flush to zero; results beyond 480 saturate
    (second item True).
    """
    a = abs(x)
    if a < CUTOFF:
        return Fraction(0), False
    step = CUTOFF
    if a >= Fraction(1, 64):
        k = 0
        while Fraction(2) ** (k + 1) <= a:
            k += 1
        while Fraction(2) ** k > a:
            k -= 1
        step = Fraction(2) ** (k - 3)
    q = a / step
    n = q.numerator // q.denominator
    r = q - n
    if r > Fraction(1, 2) or (r == Fraction(1, 2) and n % 2):
        n += 1
    v = n * step
    sat = v > PRODUCT_MAX
    if sat:
        v = PRODUCT_MAX
    return (-v if x < 0 else v), sat


@lru_cache(maxsize=1)
def product_units_table() -> list[int | None]:
    """Rounded product of every pattern pair in ``2**-9`` units (None if NaN involved)."""
    vals = [e4m3_value(b) for b in range(256)]
    out = []
    for a in range(256):
        for b in range(256):
            if vals[a] is None or vals[b] is None:
                out.append(None)
            else:
                v, _ = round_to_grid(vals[a] * vals[b])
                out.append(int(v * 512))
    return out


def fp8_dot_units(w_bits, x_bits) -> int:
    """Sum of rounded products in ``2**-9`` units."""
    t = product_units_table()
    return sum(t[(a << 8) | b] for a, b in zip(w_bits, x_bits))


def audit_ops(terms, ops, result, lo: int, hi: int) -> dict:
    """Replay a recorded reduction and count transient overflows.

    ``ops`` is a list of ``(a, b, stored)`` additions.  Each operand must be
    available in the current multiset of values (inputs plus earlier
    results), which proves the ops really reduce ``terms``.  An addition whose
    exact sum leaves ``[lo, hi]`` is an overflow.
    """
    pool = Counter(int(t) for t in terms)
    overflows = 0
    for a, b, s in ops:
        for v in (a, b):
            if pool[v] <= 0:
                raise AssertionError(f"operand {v} not available")
            pool[v] -= 1
        if not lo <= a + b <= hi:
            overflows += 1
        elif s != a + b:
            raise AssertionError(f"{a}+{b} stored as {s} without overflow")
        pool[s] += 1
    left = +pool
    if terms:
        assert sum(left.values()) == 1 and next(iter(left)) == result, left
    else:
        assert result == 0
    return {"overflows": overflows, "adds": len(ops)}


def partial_sum_overflows(terms, lo: int, hi: int) -> int:
    """Overflowing prefixes of a plain left-to-right sum."""
    s = n = 0
    for t in terms:
        s += t
        n += not lo <= s <= hi
    return n
