"""Event-level dMAC simulation, the average-bitwidth metric and an energy proxy.

The proxy is a weighted event count in arbitrary units; it only supports
relative comparisons between strategies under one :class:`CostModel`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .accum import SumResult, mgs_fp8_dot, mgs_int_sum, sum_wide, _patterns
from .events import CSV_COLUMNS, EventLog
from .fp8 import E4M3_VALUES, NAN_BITS


@dataclass(frozen=True)
class CostModel:
    narrow_add: float = 1.0
    wide_add: float = 4.0
    flush_shift: float = 1.0
    multiply: float = 2.0
    skip_check: float = 0.1

    def __post_init__(self):
        for name in ("narrow_add", "wide_add", "flush_shift", "multiply", "skip_check"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a nonnegative finite weight, got {v}")

    def scaled(self, k: float) -> CostModel:
        return CostModel(self.narrow_add * k, self.wide_add * k, self.flush_shift * k,
                         self.multiply * k, self.skip_check * k)


def energy_proxy(log: EventLog, model: CostModel) -> float:
    """Weighted sum of event counts.

    Wide-add and shift costs are only charged for the events that occur,
    which is how clock gating of the wide register is represented.
    """
    return (model.narrow_add * log.narrow_adds
            + model.wide_add * log.wide_adds
            + model.flush_shift * log.shifts
            + model.multiply * log.multiplies
            + model.skip_check * log.skip_checks)


def average_bitwidth(log: EventLog) -> float:
    """Mean minimal signed width of the running partial sum over all steps."""
    trace = log.partial_sum_bit_trace
    if trace is None:
        raise ValueError("event log has no partial-sum trace; simulate with trace=True")
    if not trace:
        raise ValueError("partial-sum trace is empty")
    return sum(trace) / len(trace)


def _int_products(w_q, x_q) -> list[int]:
    w = np.asarray(w_q, dtype=np.int64).ravel().tolist()
    x = np.asarray(x_q, dtype=np.int64).ravel().tolist()
    if len(w) != len(x):
        raise ValueError(f"length mismatch: {len(w)} vs {len(x)}")
    return [a * b for a, b in zip(w, x)]


def simulate_int_dmac(w_q, x_q, narrow_bits: int, wide_bits: int = 32,
                      symmetric: bool = False, trace: bool = False,
                      oversize: str = "error") -> tuple[SumResult, EventLog]:
    """Integer dMAC: pairwise products fed through :func:`mgs_int_sum`.

    ``oversize='bypass'`` routes products wider than the narrow register
    straight to the wide one (see :class:`mgs.accum.DualAccumulator`).
    """
    res = mgs_int_sum(_int_products(w_q, x_q), narrow_bits, wide_bits, symmetric, trace, oversize)
    return res, res.events


def simulate_int_mac(w_q, x_q, acc_bits: int = 32) -> tuple[SumResult, EventLog]:
    """Conventional integer MAC: every product goes to the wide accumulator."""
    res = sum_wide(_int_products(w_q, x_q), acc_bits)
    return res, res.events


def simulate_fp8_dmac(w, x, skipping: bool = False, wide_bits: int = 32,
                      trace: bool = False) -> tuple[SumResult, EventLog]:
    """FP8 dMAC with 16 exponent buckets; optional subnormal gating."""
    res = mgs_fp8_dot(w, x, skipping=skipping, wide_bits=wide_bits, trace=trace)
    return res, res.events


def simulate_fp8_mac(w, x) -> tuple[SumResult, EventLog]:
    """Conventional FP8 MAC: each product is aligned and added in wide precision."""
    wb, xb = _patterns(w), _patterns(x)
    if len(wb) != len(xb):
        raise ValueError(f"length mismatch: {len(wb)} vs {len(xb)}")
    if any((b & 0x7F) == NAN_BITS for b in wb + xb):
        raise ValueError("NaN operand")
    prods = [E4M3_VALUES[a] * E4M3_VALUES[b] for a, b in zip(wb, xb)]
    value = math.fsum(prods)
    n = len(prods)
    ev = EventLog(terms=n, wide_adds=n, shifts=n, multiplies=n)
    return SumResult(value, round(value * 2**18), ev, unit=2.0**-18), ev


def event_row(log: EventLog, model: CostModel | None = None) -> dict[str, object]:
    """One CSV row (see :data:`mgs.events.CSV_COLUMNS`)."""
    row: dict[str, object] = {k: getattr(log, k) for k in CSV_COLUMNS[:7]}
    row["avg_bitwidth"] = (average_bitwidth(log) if log.partial_sum_bit_trace else "")
    row["proxy"] = energy_proxy(log, model or CostModel())
    return row
