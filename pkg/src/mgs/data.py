"""Seeded synthetic operands: truncated Gaussian integers and E4M3 Gaussian vectors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fp8 import encode_e4m3_array


def truncated_normal(rng: np.random.Generator, n: int, lo: float, hi: float, sigma: float,
                     mean: float = 0.0) -> np.ndarray:
    """``N(mean, sigma)`` draws rejection-sampled into ``[lo, hi]``."""
    out = np.empty(0)
    while out.size < n:
        d = rng.normal(mean, sigma, size=max(2 * (n - out.size), 64))
        out = np.concatenate((out, d[(d >= lo) & (d <= hi)]))
    return out[:n]


def truncated_normal_ints(rng: np.random.Generator, n: int, lo: int, hi: int,
                          sigma: float) -> np.ndarray:
    """Zero-centred normal integers in ``[lo, hi]``: rejection-sample, then round."""
    return np.rint(truncated_normal(rng, n, lo, hi, sigma)).astype(np.int64)


def half_normal_ints(rng: np.random.Generator, n: int, hi: int, sigma: float) -> np.ndarray:
    """``|N(0, sigma)|`` integers in ``[0, hi]``."""
    return np.abs(truncated_normal_ints(rng, n, -hi, hi, sigma))


def gaussian_fp8(rng: np.random.Generator, n: int, sigma: float = 1.0) -> np.ndarray:
    """E4M3 patterns of ``N(0, sigma)`` draws."""
    return encode_e4m3_array(rng.normal(0.0, sigma, size=n))


@dataclass(frozen=True)
class IntDist:
    """Integer operand distribution: zero-centred normal or half-normal, truncated to ``[lo, hi]``.

    ``kind='point'`` always yields ``lo``.
    """

    kind: str
    lo: int
    hi: int
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("normal", "half-normal", "point"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.hi < self.lo:
            raise ValueError("empty support")
        if self.kind != "point" and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.kind == "half-normal" and self.lo != 0:
            raise ValueError("half-normal support starts at 0")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "point":
            return np.full(n, self.lo, dtype=np.int64)
        if self.kind == "half-normal":
            return half_normal_ints(rng, n, self.hi, self.sigma)
        return truncated_normal_ints(rng, n, self.lo, self.hi, self.sigma)


def weight_dist(bits: int, sigma: float | None = None) -> IntDist:
    """Signed ``bits``-wide weights on ``[-(2**(b-1)-1), 2**(b-1)-1]``, default ``sigma`` = max/3."""
    m = (1 << (bits - 1)) - 1
    return IntDist("normal", -m, m, sigma if sigma is not None else m / 3)


def activation_dist(bits: int, sigma: float | None = None) -> IntDist:
    """Post-ReLU activations: half-normal on ``[0, 2**bits - 1]`` with the signed ``bits``-wide sigma."""
    m = (1 << (bits - 1)) - 1
    return IntDist("half-normal", 0, (1 << bits) - 1, sigma if sigma is not None else m / 3)
