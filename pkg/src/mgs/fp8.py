"""E4M3 8-bit floating point: codec, rounded products, swamping demo, skip test.

Layout is 1 sign bit, 4 exponent bits (bias 7) and 3 mantissa bits.  There
are no infinities; ``S.1111.111`` is NaN and the largest finite magnitude is
448.  Every finite value is ``significand * 2**(max(exp, 1) - 10)`` where the
4-bit significand is ``8 + mantissa`` for normals and ``mantissa`` for
subnormals, so the whole format sits on a grid of ``2**-9`` steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

EXP_BIAS = 7
MAX_FINITE = 448.0
MIN_SUBNORMAL = 2.0**-9
#: Products smaller than this are flushed to zero (and may be skipped).
SKIP_CUTOFF = 2.0**-9
NAN_BITS = 0x7F

_MAX_FINITE_FIELDS = (15, 6)


@dataclass(frozen=True)
class Fp8Value:
    """An E4M3 bit pattern."""

    bits: int

    def __post_init__(self):
        if not 0 <= self.bits <= 0xFF:
            raise ValueError(f"E4M3 pattern out of range: {self.bits!r}")

    @property
    def sign(self) -> int:
        return self.bits >> 7

    @property
    def exponent(self) -> int:
        return (self.bits >> 3) & 0xF

    @property
    def mantissa(self) -> int:
        return self.bits & 0x7

    @property
    def is_nan(self) -> bool:
        return (self.bits & 0x7F) == 0x7F

    @property
    def is_zero(self) -> bool:
        return (self.bits & 0x7F) == 0

    @property
    def is_subnormal(self) -> bool:
        return self.exponent == 0 and self.mantissa != 0

    @property
    def significand(self) -> int:
        """4-bit integer significand, hidden bit included for normals."""
        return self.mantissa | (8 if self.exponent else 0)

    def __float__(self) -> float:
        return decode_e4m3(self)

    @classmethod
    def from_float(cls, x: float, strict: bool = False) -> Fp8Value:
        return encode_e4m3(x, strict=strict)

    def __repr__(self):
        return f"Fp8Value(0x{self.bits:02x}={decode_e4m3(self)!r})"


def _as_bits(v) -> int:
    if isinstance(v, Fp8Value):
        return v.bits
    b = int(v)
    if not 0 <= b <= 0xFF:
        raise ValueError(f"E4M3 pattern out of range: {v!r}")
    return b


def _fields(bits: int) -> tuple[int, int, int]:
    return bits >> 7, (bits >> 3) & 0xF, bits & 0x7


def _pack(sign: int, exp: int, man: int) -> int:
    return (sign << 7) | (exp << 3) | man


def _rne_shift(n: int, s: int) -> int:
    """Round ``n / 2**s`` to nearest, ties to even (``n >= 0``)."""
    if s <= 0:
        return n << -s
    q = n >> s
    r = n & ((1 << s) - 1)
    half = 1 << (s - 1)
    if r > half or (r == half and q & 1):
        q += 1
    return q


def _encode_magnitude(a: float) -> tuple[int, int] | None:
    """Exponent/mantissa fields for ``a >= 0``; None when the result overflows."""
    if a == 0.0:
        return 0, 0
    _, e = math.frexp(a)
    top = e - 1  # a in [2**top, 2**(top+1))
    if top < -6:
        n = round(math.ldexp(a, 9))  # exact scaling; round() is ties-to-even
        if n == 8:
            return 1, 0
        return 0, n
    n = round(math.ldexp(a, 3 - top))
    if n == 16:
        top += 1
        n = 8
    exp = top + EXP_BIAS
    if exp > 15 or (exp == 15 and n == 15):
        return None
    return exp, n - 8


def encode_e4m3(x: float, strict: bool = False) -> Fp8Value:
    """Round ``x`` to the nearest E4M3 value (ties to even).

    Magnitudes beyond 448 saturate to +-448 unless ``strict`` is set, in which
    case they become NaN.  NaN input encodes to the positive NaN pattern.
    """
    x = float(x)
    if math.isnan(x):
        return Fp8Value(NAN_BITS)
    sign = 1 if math.copysign(1.0, x) < 0 else 0
    a = abs(x)
    fields = None if math.isinf(a) else _encode_magnitude(a)
    if fields is None:
        if strict:
            return Fp8Value(_pack(sign, 15, 7))
        fields = _MAX_FINITE_FIELDS
    return Fp8Value(_pack(sign, *fields))


def decode_e4m3(v) -> float:
    """Exact value of an E4M3 pattern (NaN pattern gives ``nan``)."""
    return float(E4M3_VALUES[_as_bits(v)])


def _decode_bits(bits: int) -> float:
    sign, exp, man = _fields(bits)
    if exp == 15 and man == 7:
        return math.nan
    sig = man | (8 if exp else 0)
    val = math.ldexp(sig, max(exp, 1) - 10)
    return -val if sign else val


#: Decoded value of every pattern, indexed by the 8-bit code.
E4M3_VALUES = np.array([_decode_bits(b) for b in range(256)], dtype=np.float64)
E4M3_VALUES.setflags(write=False)


def classify(v) -> str:
    b = Fp8Value(_as_bits(v))
    if b.is_nan:
        return "nan"
    if b.is_zero:
        return "zero"
    return "subnormal" if b.exponent == 0 else "normal"


def encode_e4m3_array(x, strict: bool = False) -> np.ndarray:
    """Vectorised :func:`encode_e4m3`; returns a ``uint8`` array of patterns."""
    x = np.asarray(x, dtype=np.float64)
    a = np.abs(x)
    sign = np.signbit(x).astype(np.int64)
    nan = np.isnan(x)
    with np.errstate(invalid="ignore"):
        _, e = np.frexp(a)
        top = e.astype(np.int64) - 1
        sub = top < -6
        q_exp = np.where(sub, -9, top - 3)
        n = np.rint(np.ldexp(a, -q_exp)).astype(np.int64, copy=False) if a.size else np.zeros(0, np.int64)
    n = np.where(nan | np.isinf(a), 0, n)
    # subnormal grid
    sub_exp = np.where(n == 8, 1, 0)
    sub_man = np.where(n == 8, 0, n)
    # normal grid
    carry = n == 16
    top_n = top + carry
    n_n = np.where(carry, 8, n)
    exp_n = top_n + EXP_BIAS
    exp = np.where(sub, sub_exp, exp_n)
    man = np.where(sub, sub_man, n_n - 8)
    zero = a == 0
    exp = np.where(zero, 0, exp)
    man = np.where(zero, 0, man)
    over = (~sub & ((exp_n > 15) | ((exp_n == 15) & (n_n == 15)))) | np.isinf(a)
    over &= ~nan
    if strict:
        exp = np.where(over, 15, exp)
        man = np.where(over, 7, man)
    else:
        exp = np.where(over, 15, exp)
        man = np.where(over, 6, man)
    out = (sign << 7) | (exp << 3) | man
    out = np.where(nan, NAN_BITS, out)
    return out.astype(np.uint8)


def decode_e4m3_array(bits) -> np.ndarray:
    return E4M3_VALUES[np.asarray(bits, dtype=np.uint8)]


@dataclass(frozen=True)
class ProductTerm:
    """Rounded partial product: ``sign * significand * 2**(max(biased_exp, 1) - 10)``."""

    sign: int
    biased_exp: int
    significand: int
    is_zero: bool = False
    was_saturated: bool = False

    @property
    def signed_significand(self) -> int:
        """The 5-bit two's complement value fed to a bucket adder."""
        return -self.significand if self.sign < 0 else self.significand

    @property
    def value(self) -> float:
        return self.sign * math.ldexp(self.significand, max(self.biased_exp, 1) - 10)

    @property
    def fixed_point(self) -> int:
        """Exact value in units of ``2**-9``."""
        return self.signed_significand << (max(self.biased_exp, 1) - 1)


def _operand(bits: int) -> tuple[int, int, int]:
    """(sign, integer significand, effective exponent) of a pattern."""
    sign, exp, man = _fields(bits)
    return sign, man | (8 if exp else 0), max(exp, 1)


def _multiply_bits(ab: int, bb: int) -> ProductTerm:
    sa, ma, ea = _operand(ab)
    sb, mb, eb = _operand(bb)
    sign = -1 if sa ^ sb else 1
    m = ma * mb
    k = ea + eb - 20  # product = m * 2**k
    # |p| < 2**-9 flushes to zero
    if m == 0 or m.bit_length() - 1 + k < -9:
        return ProductTerm(sign, 0, 0, is_zero=True)
    top = m.bit_length() - 1 + k
    exp = top + EXP_BIAS
    if exp <= 0:
        sig = _rne_shift(m, -(k + 9))
        if sig == 8:
            return ProductTerm(sign, 1, 8)
        return ProductTerm(sign, 0, sig)
    sig = _rne_shift(m, m.bit_length() - 4)
    if sig == 16:
        sig = 8
        exp += 1
    if exp > 15:
        return ProductTerm(sign, 15, 15, was_saturated=True)
    return ProductTerm(sign, exp, sig)


@lru_cache(maxsize=1)
def product_table() -> tuple[ProductTerm, ...]:
    """All 65536 products, indexed by ``(a_bits << 8) | b_bits`` (NaN slots are None)."""
    table = []
    for a in range(256):
        a_nan = (a & 0x7F) == 0x7F
        for b in range(256):
            if a_nan or (b & 0x7F) == 0x7F:
                table.append(None)
            else:
                table.append(_multiply_bits(a, b))
    return tuple(table)


@lru_cache(maxsize=1)
def product_fixed_point_table() -> np.ndarray:
    """Exact product values in ``2**-9`` units, same indexing as :func:`product_table`."""
    return np.array([0 if t is None else t.fixed_point for t in product_table()], dtype=np.int64)


def _check_not_nan(*bits: int):
    for b in bits:
        if (b & 0x7F) == 0x7F:
            raise ValueError("NaN operand")


def multiply_to_product_term(a, b) -> ProductTerm:
    """Multiply two E4M3 values and round to a 4-bit significand, 4-bit exponent term.

    Rounding is to nearest, ties to even.  Exact products below ``2**-9`` in
    magnitude become zero; products beyond ``15 * 2**5`` saturate and are
    flagged with ``was_saturated``.
    """
    ab, bb = _as_bits(a), _as_bits(b)
    _check_not_nan(ab, bb)
    return product_table()[(ab << 8) | bb]


def is_skippable(a, b) -> bool:
    """True when ``|a * b| < 2**-9``, decided from exponent fields and significands."""
    ab, bb = _as_bits(a), _as_bits(b)
    _check_not_nan(ab, bb)
    _, ma, ea = _operand(ab)
    _, mb, eb = _operand(bb)
    # |a*b| = ma*mb * 2**(ea+eb-20) < 2**-9  <=>  ma*mb < 2**(11-ea-eb)
    shift = 11 - ea - eb
    if shift <= 0:
        return ma * mb == 0
    return ma * mb < (1 << shift)


def _grid_exponent(v: float) -> int:
    """Exponent of the 4-bit-significand grid that holds ``v`` exactly."""
    if v == 0.0:
        return -6
    return max(math.frexp(v)[1] - 1, -6)


def narrow_add_values(x: float, y: float) -> float:
    """Add two grid values through a 4-bit significand adder.

    The operand with the smaller exponent is right-shifted to the larger
    exponent and its shifted-out bits are dropped (swamping).  The aligned sum
    is then rounded to E4M3, saturating at +-448.
    """
    ex, ey = _grid_exponent(x), _grid_exponent(y)
    if ex < ey:
        x, y, ex, ey = y, x, ey, ex
    ulp = math.ldexp(1.0, ex - 3)
    y = math.trunc(y / ulp) * ulp
    return decode_e4m3(encode_e4m3(x + y))


def naive_add_narrow(a, b) -> Fp8Value:
    """Single FP8 addition with a 4-bit significand adder (swamping demonstrator)."""
    ab, bb = _as_bits(a), _as_bits(b)
    _check_not_nan(ab, bb)
    return encode_e4m3(narrow_add_values(E4M3_VALUES[ab], E4M3_VALUES[bb]))


def is_skippable_by_exponent(a, b) -> bool:
    """Exponent-field-only gate: biased exponent fields summing to at most 3.

    Every pair it accepts also satisfies :func:`is_skippable`; it misses pairs
    that are small only because of a zero or a short significand.
    """
    ab, bb = _as_bits(a), _as_bits(b)
    _check_not_nan(ab, bb)
    return ((ab >> 3) & 0xF) + ((bb >> 3) & 0xF) <= 3


@dataclass(frozen=True)
class CensusRow:
    convention: str
    pairs: int
    skippable: int
    note: str


REFERENCE_SKIPPABLE = 1280


def skip_census() -> list[CensusRow]:
    """Count skippable operand pairs over the 256 patterns under several conventions.

    NaN patterns never form a skippable pair (there is no product to skip) and
    ``+0`` / ``-0`` are treated as distinct patterns throughout.
    """
    non_nan = [b for b in range(256) if (b & 0x7F) != 0x7F]
    nonzero = [b for b in non_nan if b & 0x7F]
    exact = {(a, b): is_skippable(a, b) for a in non_nan for b in non_nan}
    expo = {(a, b): is_skippable_by_exponent(a, b) for a in non_nan for b in non_nan}

    def unordered(table, pats, with_self):
        n = sum(table[a, b] for i, a in enumerate(pats) for b in pats[i + 1:])
        if with_self:
            n += sum(table[a, a] for a in pats)
        return n

    total = math.comb(256, 2)
    rows = []
    for rule, table, desc in (
        ("exact", exact, "|w*x| < 2^-9"),
        ("exponent", expo, "biased exponent fields sum <= 3"),
    ):
        ordered = sum(table.values())
        rows += [
            CensusRow(f"{rule}/unordered-distinct", total, unordered(table, non_nan, False),
                      f"{desc}; C(256,2) pairs of distinct patterns, NaN pairs never skippable"),
            CensusRow(f"{rule}/unordered-with-self", total + 256, unordered(table, non_nan, True),
                      f"{desc}; unordered pairs allowing a pattern with itself"),
            CensusRow(f"{rule}/ordered", 256 * 256, ordered, f"{desc}; ordered pairs"),
            CensusRow(f"{rule}/ordered-halved", total, ordered // 2,
                      f"{desc}; ordered count halved (self pairs counted as half)"),
            CensusRow(f"{rule}/unordered-distinct-nonzero", total, unordered(table, nonzero, False),
                      f"{desc}; both operands nonzero"),
        ]
    return rows
