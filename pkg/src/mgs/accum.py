"""Summation strategies for narrow accumulators.

Integer baselines (sequential clip/wraparound, pairwise, sorted pairing,
AGS), FP8 narrow-float baselines (sequential, pairwise, compensated), and the
greedy dual-accumulator sums: :func:`mgs_int_sum` for integer products and
:func:`mgs_fp8_dot` for E4M3 dot products bucketed by product exponent.

Every strategy returns a :class:`SumResult` carrying an :class:`EventLog`.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache, partial
from typing import Callable, NamedTuple, Sequence

from .events import EventLog, signed_width
from .fp8 import MAX_FINITE, NAN_BITS, _as_bits, decode_e4m3, encode_e4m3, product_table

FP8_UNIT = 2.0**-9
BUCKETS = 16
BUCKET_MIN, BUCKET_MAX = -16, 15


class WideOverflowError(OverflowError):
    """The wide accumulator left its range; never wrapped silently."""


@dataclass
class SumResult:
    value: float
    exact_fixed_point: int
    events: EventLog
    clipped_count: int = 0
    unit: float = 1.0
    persistent_overflow: bool = False
    #: Additions performed, as ``(a, b, stored_result)``, when recording was requested.
    ops: list[tuple[int, int, int]] | None = field(default=None, repr=False)


def acc_range(bits: int, symmetric: bool = False) -> tuple[int, int]:
    """Accumulator range; ``symmetric`` drops the most negative code (``[-15, 15]`` at 5 bits)."""
    if bits < 2:
        raise ValueError(f"accumulator needs at least 2 bits, got {bits}")
    hi = (1 << (bits - 1)) - 1
    return (-hi if symmetric else -hi - 1), hi


def _int_terms(terms, lo: int, hi: int) -> list[int]:
    out = [int(t) for t in terms]
    for t in out:
        if t < lo or t > hi:
            raise ValueError(f"term {t} outside accumulator range [{lo}, {hi}]")
    return out


def _result(total: int, events: EventLog, clipped: int = 0, persistent: bool = False,
            ops=None) -> SumResult:
    return SumResult(float(total), total, events, clipped, 1.0, persistent, ops)


def _wrap(v: int, bits: int) -> int:
    m = 1 << bits
    return ((v + (m >> 1)) % m) - (m >> 1)


def sum_wide(terms: Sequence[int], acc_bits: int = 64) -> SumResult:
    """Conventional MAC: every term goes straight into one wide accumulator."""
    lo, hi = acc_range(acc_bits)
    terms = _int_terms(terms, lo, hi)
    total = 0
    for t in terms:
        total += t
        if total < lo or total > hi:
            raise WideOverflowError(f"{acc_bits}-bit accumulator overflow")
    n = len(terms)
    return _result(total, EventLog(terms=n, wide_adds=n, multiplies=n))


def sum_sequential(terms: Sequence[int], acc_bits: int, policy: str = "clip",
                   symmetric: bool = False, record: bool = False) -> SumResult:
    """Left-to-right sum in one ``acc_bits`` accumulator.

    ``policy='clip'`` saturates at the range edge; ``'wraparound'`` wraps
    modulo ``2**acc_bits``.  ``clipped_count`` counts overflow events under
    either policy.
    """
    if policy not in ("clip", "wraparound"):
        raise ValueError(f"unknown overflow policy {policy!r}")
    if policy == "wraparound" and symmetric:
        raise ValueError("wraparound needs a two's complement range")
    lo, hi = acc_range(acc_bits, symmetric)
    terms = _int_terms(terms, lo, hi)
    ops = [] if record else None
    acc = 0
    clips = 0
    for i, t in enumerate(terms):
        s = acc + t
        if s < lo or s > hi:
            clips += 1
            s = (min(max(s, lo), hi) if policy == "clip" else _wrap(s, acc_bits))
        if ops is not None and i:
            ops.append((acc, t, s))
        acc = s
    n = len(terms)
    ev = EventLog(terms=n, narrow_adds=n, clip_events=clips, multiplies=n)
    return _result(acc, ev, clips, ops=ops)


def sum_pairwise(terms: Sequence[int], acc_bits: int, policy: str = "clip",
                 symmetric: bool = False, record: bool = False) -> SumResult:
    """Balanced binary-tree reduction with the same per-add overflow policy."""
    if policy not in ("clip", "wraparound"):
        raise ValueError(f"unknown overflow policy {policy!r}")
    lo, hi = acc_range(acc_bits, symmetric)
    level = _int_terms(terms, lo, hi)
    n = len(level)
    ops = [] if record else None
    clips = adds = 0
    while len(level) > 1:
        nxt = []
        for a, b in zip(level[::2], level[1::2]):
            s = a + b
            adds += 1
            if s < lo or s > hi:
                clips += 1
                s = min(max(s, lo), hi) if policy == "clip" else _wrap(s, acc_bits)
            if ops is not None:
                ops.append((a, b, s))
            nxt.append(s)
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    total = level[0] if level else 0
    ev = EventLog(terms=n, narrow_adds=adds, clip_events=clips, multiplies=n)
    return _result(total, ev, clips, ops=ops)


def sum_sorted_pairing(terms: Sequence[int], acc_bits: int, symmetric: bool = False,
                       record: bool = False) -> SumResult:
    """Repeatedly add the largest positive to the most negative value.

    Each round pairs the sorted positive list against the sorted negative
    list; unmatched values carry over.  Once a single sign remains the values
    are added pairwise, which cannot overflow when the final sum fits.  A
    persistent overflow is flagged and the clipped result returned.
    """
    lo, hi = acc_range(acc_bits, symmetric)
    vals = _int_terms(terms, lo, hi)
    n = len(vals)
    exact = sum(vals)
    ops = [] if record else None
    clips = adds = 0

    def add(a, b):
        nonlocal clips, adds
        s = a + b
        adds += 1
        if s < lo or s > hi:
            clips += 1
            s = min(max(s, lo), hi)
        if ops is not None:
            ops.append((a, b, s))
        return s

    while len(vals) > 1:
        pos = sorted((v for v in vals if v >= 0), reverse=True)
        neg = sorted(v for v in vals if v < 0)
        if pos and neg:
            k = min(len(pos), len(neg))
            vals = [add(p, q) for p, q in zip(pos, neg)] + pos[k:] + neg[k:]
        else:
            same = pos or neg
            vals = [add(a, b) for a, b in zip(same[::2], same[1::2])]
            if len(same) % 2:
                vals.append(same[-1])
    total = vals[0] if vals else 0
    ev = EventLog(terms=n, narrow_adds=adds, clip_events=clips, multiplies=n)
    return _result(total, ev, clips, persistent=not lo <= exact <= hi, ops=ops)


class AgsAccumulator:
    """Streaming sign-alternating sum (AGS).

    Terms are consumed in arrival order while they fit.  A term that would
    overflow waits in a FIFO for its sign until opposite-sign terms pull the
    running sum back; the accumulator always drains the list whose sign
    opposes its own first.  The peak number of buffered terms is kept in
    ``watermark``.  Whatever is still stuck at end of stream is a persistent
    overflow and is added with clipping by :meth:`finish`.
    """

    def __init__(self, acc_bits: int, symmetric: bool = False, record: bool = False):
        self.lo, self.hi = acc_range(acc_bits, symmetric)
        self.ops = [] if record else None
        self.pos: deque[int] = deque()
        self.neg: deque[int] = deque()
        self.acc = 0
        self.seen = self.consumed = self.clips = self.watermark = 0
        self.total = 0

    def state(self) -> tuple:
        """Everything that determines future behaviour (ops excluded)."""
        return self.acc, tuple(self.pos), tuple(self.neg), self.consumed > 0

    def _take(self, q, clip=False):
        t = q.popleft()
        s = self.acc + t
        if clip and not self.lo <= s <= self.hi:
            self.clips += 1
            s = min(max(s, self.lo), self.hi)
        if self.ops is not None and self.consumed:
            self.ops.append((self.acc, t, s))
        self.acc = s
        self.consumed += 1

    def _drain(self):
        while True:
            for q in ((self.neg, self.pos) if self.acc >= 0 else (self.pos, self.neg)):
                if q and self.lo <= self.acc + q[0] <= self.hi:
                    self._take(q)
                    break
            else:
                return

    def push(self, t: int) -> None:
        t = _int_terms([t], self.lo, self.hi)[0]
        self.seen += 1
        self.total += t
        (self.pos if t >= 0 else self.neg).append(t)
        self._drain()
        self.watermark = max(self.watermark, len(self.pos) + len(self.neg))

    def finish(self) -> SumResult:
        while self.pos or self.neg:
            self._take(self.pos if self.pos else self.neg, clip=True)
            self._drain()
        n = self.seen
        ev = EventLog(terms=n, narrow_adds=n, clip_events=self.clips,
                      buffer_watermark=self.watermark, multiplies=n)
        return _result(self.acc, ev, self.clips,
                       persistent=not self.lo <= self.total <= self.hi, ops=self.ops)


def sum_ags(terms: Sequence[int], acc_bits: int, symmetric: bool = False,
            record: bool = False) -> SumResult:
    """AGS over a whole sequence; see :class:`AgsAccumulator`."""
    acc = AgsAccumulator(acc_bits, symmetric, record)
    for t in terms:
        acc.push(t)
    return acc.finish()


class DualAccumulator:
    """Narrow register backed by a wide one: the integer dMAC datapath.

    A term that would overflow the narrow register first flushes the narrow
    value into the wide register and then takes its place.

    A term too wide for the narrow register is an error unless
    ``oversize='bypass'``, which adds it straight into the wide register.
    That counts as a narrow add (the overflow is detected there), a flush
    and a wide add, and leaves the narrow register untouched.
    """

    def __init__(self, narrow_bits: int, wide_bits: int = 32, symmetric: bool = False,
                 trace: bool = False, oversize: str = "error"):
        if wide_bits < narrow_bits + 8:
            raise ValueError("wide accumulator must be at least 8 bits wider than the narrow one")
        if oversize not in ("error", "bypass"):
            raise ValueError(f"unknown oversize policy {oversize!r}")
        self.bypass = oversize == "bypass"
        self.narrow_bits = narrow_bits
        self.wide_bits = wide_bits
        self.lo, self.hi = acc_range(narrow_bits, symmetric)
        self.wide_lo, self.wide_hi = acc_range(wide_bits)
        self.narrow = 0
        self.wide = 0
        self.events = EventLog(partial_sum_bit_trace=[] if trace else None)

    @property
    def total(self) -> int:
        return self.narrow + self.wide

    def _wide_add(self, v: int):
        self.wide += v
        self.events.wide_adds += 1
        if not self.wide_lo <= self.wide <= self.wide_hi:
            raise WideOverflowError(f"{self.wide_bits}-bit wide accumulator overflow")

    def add(self, term: int):
        self.extend((term,))

    def extend(self, terms):
        lo, hi = self.lo, self.hi
        narrow, ev = self.narrow, self.events
        trace = ev.partial_sum_bit_trace
        n = flushes = 0
        try:
            for t in terms:
                if t < lo or t > hi:
                    if not self.bypass:
                        raise ValueError(f"term {t} outside narrow range [{lo}, {hi}]")
                    n += 1
                    self.narrow = narrow
                    self._wide_add(t)
                    flushes += 1
                elif not lo <= narrow + t <= hi:
                    n += 1
                    self.narrow = narrow
                    self._wide_add(narrow)
                    flushes += 1
                    narrow = t
                else:
                    n += 1
                    narrow += t
                if trace is not None:
                    trace.append(signed_width(narrow + self.wide))
        finally:
            self.narrow = narrow
            ev.terms += n
            ev.narrow_adds += n
            ev.multiplies += n
            ev.flushes += flushes

    def finish(self) -> int:
        """Merge the narrow register into the wide one (the ``done`` path)."""
        if self.events.terms:
            self._wide_add(self.narrow)
            self.events.final_merges += 1
            self.narrow = 0
        return self.wide


def mgs_int_sum(terms: Sequence[int], narrow_bits: int, wide_bits: int = 32,
                symmetric: bool = False, trace: bool = False, oversize: str = "error") -> SumResult:
    """Exact greedy sum through a narrow/wide register pair."""
    acc = DualAccumulator(narrow_bits, wide_bits, symmetric, trace, oversize)
    acc.extend(int(t) for t in terms)
    total = acc.finish()
    return _result(total, acc.events)


# Per-product lookups for the bucket datapath: bucket index, signed
# significand and the flush shift max(e, 1) - 1, indexed like product_table().
def _bucket_tables():
    exps, sigs = [], []
    for t in product_table():
        if t is None:
            exps.append(0)
            sigs.append(0)
        else:
            exps.append(t.biased_exp)
            sigs.append(t.signed_significand)
    return exps, sigs


_BUCKET_EXP: list[int] | None = None
_BUCKET_SIG: list[int] | None = None
_SHIFT = [max(e, 1) - 1 for e in range(BUCKETS)]


def _tables():
    global _BUCKET_EXP, _BUCKET_SIG
    if _BUCKET_EXP is None:
        _BUCKET_EXP, _BUCKET_SIG = _bucket_tables()
    return _BUCKET_EXP, _BUCKET_SIG


@lru_cache(maxsize=1)
def _skip_table() -> tuple[bool, ...]:
    # products below 2**-9 are exactly the ones that round to a zero term
    return tuple(t is not None and t.is_zero for t in product_table())


class Fp8BucketAccumulator:
    """Sixteen 5-bit registers, one per product exponent, over a wide register.

    The wide register counts units of ``2**-9``; bucket ``e`` is worth
    ``bucket[e] << (max(e, 1) - 1)`` of them.  With ``narrow_only`` an
    overflowing bucket saturates instead of flushing.
    """

    def __init__(self, wide_bits: int = 32, narrow_only: bool = False,
                 skipping: bool = False, trace: bool = False):
        self.wide_bits = wide_bits
        self.wide_lo, self.wide_hi = acc_range(wide_bits)
        self.narrow_only = narrow_only
        self.skipping = skipping
        self.buckets = [0] * BUCKETS
        self.wide = 0
        self.clipped = 0
        self.events = EventLog(partial_sum_bit_trace=[] if trace else None)

    def exact_total(self) -> int:
        """``wide + sum(bucket << shift)`` in ``2**-9`` units."""
        return self.wide + sum(b << s for b, s in zip(self.buckets, _SHIFT))

    def _wide_add(self, v: int):
        self.wide += v
        self.events.wide_adds += 1
        self.events.shifts += 1
        if not self.wide_lo <= self.wide <= self.wide_hi:
            raise WideOverflowError(f"{self.wide_bits}-bit wide accumulator overflow")

    def add_term(self, term):
        """Consume one :class:`~mgs.fp8.ProductTerm`."""
        self._consume(term.biased_exp, term.signed_significand)
        self.events.terms += 1
        self.events.multiplies += 1

    def _consume(self, e: int, s: int):
        ev = self.events
        b = self.buckets[e] + s
        ev.narrow_adds += 1
        if b < BUCKET_MIN or b > BUCKET_MAX:
            if self.narrow_only:
                self.clipped += 1
                ev.clip_events += 1
                b = BUCKET_MIN if b < BUCKET_MIN else BUCKET_MAX
            else:
                self._wide_add(self.buckets[e] << _SHIFT[e])
                ev.flushes += 1
                b = s
        self.buckets[e] = b
        if ev.partial_sum_bit_trace is not None:
            ev.partial_sum_bit_trace.append(signed_width(self.exact_total()))

    def add_pairs(self, w_bits: Sequence[int], x_bits: Sequence[int]):
        """Multiply and accumulate E4M3 pattern pairs."""
        exps, sigs = _tables()
        skip = _skip_table() if self.skipping else None
        buckets, shift = self.buckets, _SHIFT
        ev = self.events
        tracing = ev.partial_sum_bit_trace is not None
        narrow_only = self.narrow_only
        for a, b in zip(w_bits, x_bits):
            if (a & 0x7F) == NAN_BITS or (b & 0x7F) == NAN_BITS:
                raise ValueError("NaN operand")
            i = (a << 8) | b
            ev.terms += 1
            if skip is not None:
                ev.skip_checks += 1
                if skip[i]:
                    ev.skips += 1
                    if tracing:
                        ev.partial_sum_bit_trace.append(signed_width(self.exact_total()))
                    continue
            ev.multiplies += 1
            if tracing:
                self._consume(exps[i], sigs[i])
                continue
            e = exps[i]
            s = sigs[i]
            v = buckets[e] + s
            ev.narrow_adds += 1
            if v < BUCKET_MIN or v > BUCKET_MAX:
                if narrow_only:
                    self.clipped += 1
                    ev.clip_events += 1
                    v = BUCKET_MIN if v < BUCKET_MIN else BUCKET_MAX
                else:
                    self._wide_add(buckets[e] << shift[e])
                    ev.flushes += 1
                    v = s
            buckets[e] = v

    def finish(self) -> int:
        """Shift every bucket into the wide register once (16 merges)."""
        if self.events.terms:
            for e in range(BUCKETS):
                self._wide_add(self.buckets[e] << _SHIFT[e])
                self.buckets[e] = 0
                self.events.final_merges += 1
        return self.wide


def _patterns(v) -> list[int]:
    if hasattr(v, "tolist"):
        v = v.tolist()
    return [_as_bits(x) for x in v]


def mgs_fp8_dot(w, x, skipping: bool = False, narrow_only: bool = False,
                wide_bits: int = 32, trace: bool = False) -> SumResult:
    """E4M3 dot product with exponent-bucketed narrow accumulation.

    Products are rounded to 4-bit significands and added into the bucket of
    their exponent.  In full mode the result is the exact sum of the rounded
    products; ``narrow_only`` clips overflowing buckets instead of flushing
    them to the wide register.
    """
    wb, xb = _patterns(w), _patterns(x)
    if len(wb) != len(xb):
        raise ValueError(f"length mismatch: {len(wb)} vs {len(xb)}")
    acc = Fp8BucketAccumulator(wide_bits, narrow_only, skipping, trace)
    acc.add_pairs(wb, xb)
    total = acc.finish()
    return SumResult(total * FP8_UNIT, total, acc.events, acc.clipped, FP8_UNIT)


# ---------------------------------------------------------------- FP8 baselines

def _narrow_add(x: float, y: float) -> tuple[float, bool]:
    ex = max(math.frexp(x)[1] - 1, -6) if x else -6
    ey = max(math.frexp(y)[1] - 1, -6) if y else -6
    if ex < ey:
        x, y, ex = y, x, ey
    ulp = math.ldexp(1.0, ex - 3)
    s = x + math.trunc(y / ulp) * ulp
    return decode_e4m3(encode_e4m3(s)), abs(s) > MAX_FINITE


def _fp8_result(v: float, n: int, adds: int, clips: int) -> SumResult:
    ev = EventLog(terms=n, narrow_adds=adds, clip_events=clips, multiplies=n)
    return SumResult(v, round(v / FP8_UNIT), ev, clips, FP8_UNIT)


def sum_sequential_fp8(values: Sequence[float]) -> SumResult:
    """Left-to-right sum in an E4M3 register (4-bit significand adder, saturating)."""
    acc = 0.0
    clips = 0
    for v in values:
        acc, c = _narrow_add(acc, float(v))
        clips += c
    return _fp8_result(acc, len(values), len(values), clips)


def sum_pairwise_fp8(values: Sequence[float]) -> SumResult:
    """Balanced-tree sum where every node is a narrow E4M3 addition."""
    level = [float(v) for v in values]
    n = len(level)
    clips = adds = 0
    while len(level) > 1:
        nxt = []
        for a, b in zip(level[::2], level[1::2]):
            s, c = _narrow_add(a, b)
            clips += c
            adds += 1
            nxt.append(s)
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return _fp8_result(level[0] if level else 0.0, n, adds, clips)


def round_significand(x: float, bits: int) -> float:
    """Round to ``bits`` significant bits, ties to even, unbounded exponent."""
    if x == 0.0 or not math.isfinite(x):
        return x
    m, e = math.frexp(x)
    return math.ldexp(round(math.ldexp(m, bits)), e - bits)


def sum_recursive(terms: Sequence[float], sig_bits: int = 4) -> float:
    """Plain left-to-right sum with every addition rounded to ``sig_bits``."""
    r = partial(round_significand, bits=sig_bits)
    s = 0.0
    for x in terms:
        s = r(s + r(float(x)))
    return s


def sum_kahan(terms: Sequence[float], sig_bits: int = 4) -> float:
    """Compensated sum (Kahan-Babuska-Neumaier) at ``sig_bits`` of precision.

    Every floating-point operation, including those on the running
    compensation, is rounded to ``sig_bits`` significant bits.
    """
    r = partial(round_significand, bits=sig_bits)
    s = c = 0.0
    for x in terms:
        x = float(x)
        if not math.isfinite(x):
            raise ValueError("non-finite term")
        x = r(x)
        t = r(s + x)
        if abs(s) >= abs(x):
            c = r(c + r(r(s - t) + x))
        else:
            c = r(c + r(r(x - t) + s))
        s = t
    return r(s + c)


class ErrorMeasure(NamedTuple):
    value: float
    absolute: bool = False


def relative_error(result: float, reference: float) -> ErrorMeasure:
    """``|result - reference| / |reference|`` in percent.

    A zero reference falls back to the absolute error with ``absolute=True``.
    """
    diff = abs(result - reference)
    if reference == 0:
        return ErrorMeasure(diff, True)
    return ErrorMeasure(100.0 * diff / abs(reference))


# ------------------------------------------------------------------ registry

def _strategy_table() -> dict[str, Callable]:
    return {
        "wide": lambda terms, narrow_bits, wide_bits: sum_wide(terms, wide_bits),
        "clip": lambda terms, narrow_bits, wide_bits: sum_sequential(terms, narrow_bits, "clip"),
        "wraparound": lambda terms, narrow_bits, wide_bits: sum_sequential(terms, narrow_bits, "wraparound"),
        "pairwise": lambda terms, narrow_bits, wide_bits: sum_pairwise(terms, narrow_bits, "clip"),
        "sorted-pairing": lambda terms, narrow_bits, wide_bits: sum_sorted_pairing(terms, narrow_bits),
        "ags": lambda terms, narrow_bits, wide_bits: sum_ags(terms, narrow_bits),
        "mgs": lambda terms, narrow_bits, wide_bits: mgs_int_sum(terms, narrow_bits, wide_bits),
    }


INT_STRATEGIES = tuple(_strategy_table())


def make_int_strategy(name: str, narrow_bits: int = 16, wide_bits: int = 32) -> Callable[[Sequence[int]], SumResult]:
    """Bind an integer strategy to accumulator widths; the result takes only the terms."""
    table = _strategy_table()
    if name not in table:
        raise ValueError(f"unknown strategy {name!r}; expected one of {', '.join(table)}")
    fn = table[name]
    return lambda terms: fn(terms, narrow_bits, wide_bits)
