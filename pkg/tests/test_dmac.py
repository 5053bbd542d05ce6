from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mgs.data import activation_dist, gaussian_fp8, weight_dist
from mgs.dmac import (CostModel, average_bitwidth, energy_proxy, event_row,
                      simulate_fp8_dmac, simulate_fp8_mac, simulate_int_dmac, simulate_int_mac)
from mgs.events import CSV_COLUMNS, EventLog
from mgs.fp8 import encode_e4m3, is_skippable
from mgs.parallel import stream_rng

# 12 products whose running sum hits 15 then +2, and later -9 then -7.
WALKTHROUGH_TERMS = [5, 6, 4, 2, -4, -7, -7, 3, 1, 2, -1, 0]

costs = st.builds(CostModel, *(st.floats(0, 10) for _ in range(5)))


def test_twelve_term_walkthrough_two_flushes():
    res, ev = simulate_int_dmac(WALKTHROUGH_TERMS, [1] * 12, narrow_bits=5, wide_bits=16, symmetric=True)
    assert ev.flushes == 2
    assert res.exact_fixed_point == sum(WALKTHROUGH_TERMS)
    assert ev.narrow_adds == 12 and ev.final_merges == 1 and ev.wide_adds == 3


def test_zero_activations_never_flush():
    res, ev = simulate_int_dmac([7, -8, 3], [0, 0, 0], 4)
    assert res.exact_fixed_point == 0 and ev.flushes == 0


def test_int_mac_baseline():
    res, ev = simulate_int_mac([1, 2, 3], [4, 5, 6])
    assert res.exact_fixed_point == 32 and ev.wide_adds == 3 and ev.narrow_adds == 0


def test_mean_flushes_below_one_at_width_10_length_32():
    wd, xd = weight_dist(5), activation_dist(7)
    flushes = 0
    n = 10_000
    rng = stream_rng(7, 0)
    w = wd.sample(rng, n * 32).reshape(n, 32)
    x = xd.sample(rng, n * 32).reshape(n, 32)
    for i in range(n):
        flushes += simulate_int_dmac(w[i], x[i], 10, oversize="bypass")[1].flushes
    assert flushes / n < 1


def test_fp8_single_pair_events():
    one = encode_e4m3(1.0)
    res, ev = simulate_fp8_dmac([one], [one])
    assert res.value == 1.0
    assert (ev.narrow_adds, ev.flushes, ev.final_merges) == (1, 0, 16)


def test_fp8_all_skipped():
    tiny = 0x01
    res, ev = simulate_fp8_dmac([tiny] * 20, [tiny] * 20, skipping=True)
    assert ev.narrow_adds == 0 and ev.skips == 20 and res.value == 0.0


def test_fp8_skipping_is_lossless_and_matches_census():
    rng = stream_rng(3, 1)
    for sigma in (1.0, 0.05):
        w, x = gaussian_fp8(rng, 1024, sigma), gaussian_fp8(rng, 1024, sigma)
        on, ev_on = simulate_fp8_dmac(w, x, skipping=True)
        off, ev_off = simulate_fp8_dmac(w, x, skipping=False)
        expected = sum(is_skippable(a, b) for a, b in zip(w.tolist(), x.tolist()))
        assert ev_on.skips == expected
        assert ev_off.skips == 0
        # skipped products are exactly the ones that round to zero
        assert on.exact_fixed_point == off.exact_fixed_point
        assert abs(on.value - off.value) <= ev_on.skips * 2.0**-9 * 7 / 8
        assert ev_on.narrow_adds + ev_on.skips == 1024
        assert ev_on.wide_adds == ev_on.flushes + ev_on.final_merges


def test_fp8_mac_baseline():
    w = [encode_e4m3(v) for v in (1.0, -0.5, 2.0)]
    res, ev = simulate_fp8_mac(w, w)
    assert res.value == 5.25
    assert (ev.wide_adds, ev.shifts, ev.multiplies) == (3, 3, 3)


# ----------------------------------------------------------- bitwidth

def test_average_bitwidth_trivial():
    assert average_bitwidth(EventLog(partial_sum_bit_trace=[1, 1, 1])) == 1
    _, ev = simulate_int_dmac([0, 0, 0], [1, 1, 1], 4, trace=True)
    assert average_bitwidth(ev) == 1
    _, ev = simulate_int_dmac([1, -2, 2, -2], [1, 1, 1, 1], 4, trace=True)
    assert average_bitwidth(ev) == 2
    with pytest.raises(ValueError):
        average_bitwidth(EventLog())


def test_average_bitwidth_gaussian_range():
    wd, xd = weight_dist(5), activation_dist(7)
    rng = stream_rng(11, 0)
    vals = []
    for _ in range(500):
        _, ev = simulate_int_dmac(wd.sample(rng, 64), xd.sample(rng, 64), 12, trace=True)
        vals.append(average_bitwidth(ev))
    assert 7 <= np.mean(vals) <= 11


# --------------------------------------------------------------- proxy

def test_proxy_basics():
    m = CostModel()
    assert energy_proxy(EventLog(), m) == 0
    ev = EventLog(terms=4, narrow_adds=4, wide_adds=2, shifts=1, multiplies=4, skip_checks=4)
    assert energy_proxy(ev, m.scaled(2)) == pytest.approx(2 * energy_proxy(ev, m))
    with pytest.raises(ValueError):
        CostModel(narrow_add=-1)


@given(st.lists(st.integers(-15, 15), max_size=60), st.integers(0, 20))
def test_event_counts_never_decrease(prefix, extra):
    _, a = simulate_int_dmac(prefix, [1] * len(prefix), 5, 16)
    more = prefix + [3] * extra
    _, b = simulate_int_dmac(more, [1] * len(more), 5, 16)
    for k, v in a.counts().items():
        assert getattr(b, k) >= v


@given(st.lists(st.integers(-64, 63), max_size=100), costs)
def test_int_proxy_accounting_identity(terms, model):
    # baseline minus MGS = n*(wide - narrow) - wide*(flushes + merges)
    _, mgs = simulate_int_dmac(terms, [1] * len(terms), 8)
    _, base = simulate_int_mac(terms, [1] * len(terms))
    n = len(terms)
    diff = energy_proxy(base, model) - energy_proxy(mgs, model)
    want = n * (model.wide_add - model.narrow_add) - model.wide_add * (mgs.flushes + mgs.final_merges)
    assert diff == pytest.approx(want, abs=1e-9 * (1 + abs(want)))


def test_wide_equal_narrow_cost_is_a_counterexample_to_unconditional_dominance():
    # with equal adder costs the extra flush/merge adds make MGS dearer
    model = CostModel(narrow_add=1, wide_add=1, flush_shift=0, multiply=0, skip_check=0)
    one = encode_e4m3(1.0)
    _, mgs = simulate_fp8_dmac([one], [one])
    _, base = simulate_fp8_mac([one], [one])
    assert energy_proxy(mgs, model) > energy_proxy(base, model)


def test_event_row_columns():
    _, ev = simulate_int_dmac([1, 2], [3, 4], 8, trace=True)
    row = event_row(ev)
    assert tuple(row) == CSV_COLUMNS
    assert row["terms"] == 2 and row["avg_bitwidth"] == average_bitwidth(ev)
