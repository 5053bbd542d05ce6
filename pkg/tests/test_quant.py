from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from mgs.accum import make_int_strategy
from mgs.quant import (QuantParams, QuantTensor, derive_params, dequantize, int_range, quantize,
                       quantize_array, quantize_tensor, quantized_dot)

reals = st.floats(min_value=-1e4, max_value=1e4, allow_nan=False)


def _round_half_even(q: Fraction) -> int:
    n = math.floor(q)
    r = q - n
    if r > Fraction(1, 2) or (r == Fraction(1, 2) and n % 2):
        n += 1
    return n


def test_symmetric_scale():
    p = derive_params([-1.0, 0.3, 1.0], 8, symmetric=True)
    assert p.scale == 2 / 255 and p.offset == 0 and p.symmetric


def test_degenerate_range():
    p = derive_params(np.zeros(5), 8)
    assert (p.scale, p.offset, p.degenerate) == (1.0, 0, True)
    assert quantize(0.0, p) == 0


def test_zero_exact_asymmetric_example():
    p = derive_params([-0.5, 0.25], 4)
    assert dequantize(quantize(0.0, p), p) == 0.0


@given(st.lists(reals, min_size=1, max_size=20), st.integers(2, 16), st.booleans())
def test_zero_is_exact_for_every_derived_params(vals, bits, symmetric):
    p = derive_params(vals, bits, symmetric)
    assert dequantize(quantize(0.0, p), p) == 0.0


def test_derive_errors():
    with pytest.raises(ValueError):
        derive_params([], 8)
    with pytest.raises(ValueError):
        derive_params([1.0, math.nan], 8)
    with pytest.raises(ValueError):
        derive_params([1.0], 1)


def test_quantize_examples():
    p = QuantParams(0.1, 0, 8, symmetric=True)
    assert quantize(0.0, p) == 0
    assert quantize(p.scale, p) == 1
    assert quantize(1e9, p) == 127 and quantize(-1e9, p) == -128
    with pytest.raises(ValueError):
        quantize(math.inf, p)


@given(reals, st.integers(2, 16), st.floats(1e-3, 10.0), st.integers(-5, 5))
def test_quantize_matches_rational_round_then_clamp(x, bits, scale, off):
    lo, hi = int_range(bits)
    p = QuantParams(scale, off, bits)
    # Python floats divide with one rounding, so compare on the float quotient.
    q = Fraction(x / scale)
    ref = min(max(_round_half_even(q) + off, lo), hi)
    assert quantize(x, p) == ref
    assert quantize_array(np.array([x]), p)[0] == ref


@given(st.lists(reals, min_size=2, max_size=20), st.integers(2, 16), st.booleans(), st.data())
def test_roundtrip_bound(vals, bits, symmetric, data):
    p = derive_params(vals, bits, symmetric)
    assume(not p.degenerate)
    lo, hi = min(min(vals), 0.0), max(max(vals), 0.0)
    if symmetric:
        m = max(abs(v) for v in vals)
        lo, hi = -m + p.scale, m - p.scale  # outermost half step may clamp
    x = data.draw(st.floats(lo, hi)) if lo <= hi else 0.0
    err = abs(dequantize(quantize(x, p), p) - x)
    assert err <= p.scale / 2 * (1 + 1e-9) + 1e-12 * abs(x)


def test_dequantize_examples():
    p = QuantParams(0.5, 0, 8)
    assert dequantize(1, p) == 0.5
    p = QuantParams(0.5, 3, 8)
    assert dequantize(3, p) == 0.0
    with pytest.raises(ValueError):
        dequantize(200, p)


def test_params_and_tensor_validation():
    with pytest.raises(ValueError):
        QuantParams(0.0, 0, 8)
    with pytest.raises(ValueError):
        QuantParams(1.0, 2, 8, symmetric=True)
    with pytest.raises(ValueError):
        QuantParams(1.0, 0, 17)
    p = QuantParams(1.0, 0, 4)
    with pytest.raises(ValueError):
        QuantTensor([0, 8], p)
    with pytest.raises(ValueError):
        QuantTensor([0, 1, 2], p, (2, 2))
    t = quantize_tensor(np.linspace(-1, 1, 6).reshape(2, 3), bits=6)
    assert t.shape == (2, 3) and t.data.shape == (2, 3)
    assert np.allclose(t.dequantize(), np.linspace(-1, 1, 6).reshape(2, 3), atol=t.params.scale / 2)


def test_quantized_dot_trivial_cases():
    wide = make_int_strategy("wide")
    assert quantized_dot([], [], wide)[0] == 0
    assert quantized_dot([3, -4, 5], [0, 0, 0], wide)[0] == 0
    with pytest.raises(ValueError):
        quantized_dot([1, 2], [1], wide)


@settings(max_examples=200)
@given(st.lists(st.tuples(st.integers(-16, 15), st.integers(-64, 63)), max_size=64))
def test_quantized_dot_wide_is_exact(pairs):
    w = [a for a, _ in pairs]
    x = [b for _, b in pairs]
    z, ev = quantized_dot(w, x, make_int_strategy("wide"))
    assert z == sum(a * b for a, b in pairs)
    assert ev.wide_adds == len(pairs)


def test_quantized_dot_wide_matches_oracle_10k():
    rng = np.random.default_rng(2024)
    wide = make_int_strategy("wide", wide_bits=64)
    p5, p7 = QuantParams(1.0, 0, 5), QuantParams(1.0, 0, 7)
    for _ in range(10_000):
        n = int(rng.integers(0, 65))
        w = QuantTensor(rng.integers(-16, 16, n), p5)
        x = QuantTensor(rng.integers(-64, 64, n), p7)
        ref = sum(int(a) * int(b) for a, b in zip(w.data.tolist(), x.data.tolist()))
        assert quantized_dot(w, x, wide)[0] == ref
