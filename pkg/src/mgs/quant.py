"""Per-tensor uniform integer quantization and the integer dot-product entry point."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

MIN_BITS = 2
MAX_BITS = 16


def int_range(bits: int) -> tuple[int, int]:
    """Two's complement range of a ``bits``-wide signed integer."""
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


@dataclass(frozen=True)
class QuantParams:
    scale: float
    offset: int
    bits: int
    symmetric: bool = False
    degenerate: bool = False

    def __post_init__(self):
        if not MIN_BITS <= self.bits <= MAX_BITS:
            raise ValueError(f"bits must lie in [{MIN_BITS}, {MAX_BITS}], got {self.bits}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if self.symmetric and self.offset != 0:
            raise ValueError("symmetric params need offset 0")

    @property
    def qmin(self) -> int:
        return int_range(self.bits)[0]

    @property
    def qmax(self) -> int:
        return int_range(self.bits)[1]


@dataclass(frozen=True)
class QuantTensor:
    data: np.ndarray
    params: QuantParams
    shape: tuple[int, ...] = field(default=())

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.int64)
        shape = tuple(self.shape) or data.shape
        if any(d <= 0 for d in shape) and data.size:
            raise ValueError(f"non-positive dimension in {shape}")
        if math.prod(shape) != data.size:
            raise ValueError(f"shape {shape} does not match {data.size} elements")
        if data.size and (data.min() < self.params.qmin or data.max() > self.params.qmax):
            raise ValueError("quantized data outside the bitwidth range")
        data = data.reshape(shape)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "shape", shape)

    def dequantize(self) -> np.ndarray:
        return self.params.scale * (self.data - self.params.offset).astype(np.float64)


def derive_params(values, bits: int, symmetric: bool = False) -> QuantParams:
    """Scale and offset that spread ``values`` over ``2**bits - 1`` uniform steps.

    The asymmetric range is widened to include 0 so that real zero always
    lands on an integer.  An all-zero range gives ``scale=1`` and sets the
    ``degenerate`` flag instead of failing.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("cannot derive quantization params from an empty tensor")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    if not MIN_BITS <= bits <= MAX_BITS:
        raise ValueError(f"bits must lie in [{MIN_BITS}, {MAX_BITS}], got {bits}")
    levels = (1 << bits) - 1
    if symmetric:
        r = 2.0 * float(np.max(np.abs(v)))
        if r == 0.0:
            return QuantParams(1.0, 0, bits, symmetric=True, degenerate=True)
        return QuantParams(r / levels, 0, bits, symmetric=True)
    lo = min(float(v.min()), 0.0)
    hi = max(float(v.max()), 0.0)
    r = hi - lo
    if r == 0.0:
        return QuantParams(1.0, 0, bits, degenerate=True)
    scale = r / levels
    offset = -(1 << (bits - 1)) - round(lo / scale)
    return QuantParams(scale, offset, bits)


def quantize(x: float, params: QuantParams) -> int:
    """``clamp(round_half_even(x / scale) + offset)``."""
    if not math.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x!r}")
    q = round(x / params.scale) + params.offset
    return min(max(q, params.qmin), params.qmax)


def quantize_array(x, params: QuantParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot quantize non-finite values")
    q = np.rint(x / params.scale).astype(np.int64) + params.offset
    return np.clip(q, params.qmin, params.qmax)


def quantize_tensor(x, params: QuantParams | None = None, bits: int = 8,
                    symmetric: bool = False) -> QuantTensor:
    x = np.asarray(x, dtype=np.float64)
    if params is None:
        params = derive_params(x, bits, symmetric)
    return QuantTensor(quantize_array(x, params), params, x.shape)


def dequantize(q: int, params: QuantParams) -> float:
    if not params.qmin <= q <= params.qmax:
        raise ValueError(f"{q} is outside the {params.bits}-bit range")
    return params.scale * (q - params.offset)


def quantized_dot(w, x, strategy: Callable[[Sequence[int]], object]):
    """Integer dot product ``sum(w_i * x_i)`` accumulated by ``strategy``.

    ``w`` and ``x`` are 1-D :class:`QuantTensor` rows or integer arrays.
    ``strategy`` is any integer summation from :mod:`mgs.accum` (it receives
    the list of elementwise products).  Returns ``(sum, EventLog)``.
    """
    wd = w.data if isinstance(w, QuantTensor) else np.asarray(w, dtype=np.int64)
    xd = x.data if isinstance(x, QuantTensor) else np.asarray(x, dtype=np.int64)
    wd, xd = wd.ravel(), xd.ravel()
    if wd.size != xd.size:
        raise ValueError(f"length mismatch: {wd.size} vs {xd.size}")
    terms = [int(a) * int(b) for a, b in zip(wd.tolist(), xd.tolist())]
    res = strategy(terms)
    return res.exact_fixed_point, res.events
