"""How long a narrow accumulator lasts before overflowing.

Two estimates: a central-limit approximation of the overflow probability of a
length-``k`` dot product, and an absorbing Markov chain whose transient
states are the accumulator values and whose single absorbing state is
overflow.  The expected number of steps to absorption is the row sum of the
fundamental matrix ``(I - Q)^-1``; it is obtained by solving ``(I - Q) t = 1``
rather than forming the inverse.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .data import IntDist
from .parallel import map_chunks, stream_rng

SINGULAR_TOL = 1e-12
MC_CHUNK = 1 << 16


class OverflowUnreachable(ValueError):
    """``I - Q`` is singular: some transient state never reaches overflow."""


@dataclass(frozen=True)
class CltParams:
    sigma_w: float
    sigma_x: float
    k: int
    acc_bits: int

    def __post_init__(self):
        if not (self.sigma_w > 0 and self.sigma_x > 0):
            raise ValueError("standard deviations must be positive")
        if self.k < 1:
            raise ValueError("dot length k must be positive")
        if self.acc_bits < 2:
            raise ValueError("accumulator needs at least 2 bits")


def normal_cdf(z: float) -> float:
    """Standard normal CDF via the C library ``erfc`` (relative error near 1 ulp)."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def clt_overflow_prob(p: CltParams) -> float:
    """``P(|Z| > 2**(a-1)) ~ 2 * Phi(-2**(a-1) / (sigma_w * sigma_x * sqrt(k)))``."""
    z = -math.ldexp(1.0, p.acc_bits - 1) / (p.sigma_w * p.sigma_x * math.sqrt(p.k))
    return 2.0 * normal_cdf(z)


@dataclass(frozen=True)
class Pmf:
    """Probability mass on the integers ``lo .. lo + len(probs) - 1``."""

    lo: int
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("a pmf needs a non-empty support")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def hi(self) -> int:
        return self.lo + self.probs.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def prob(self, v: int) -> float:
        return float(self.probs[v - self.lo]) if self.lo <= v <= self.hi else 0.0

    def mean(self) -> float:
        return float(self.support @ self.probs)

    def var(self) -> float:
        s = self.support
        return float((s * s) @ self.probs - self.mean() ** 2)

    @classmethod
    def uniform(cls, lo: int, hi: int) -> Pmf:
        return cls(lo, np.full(hi - lo + 1, 1.0 / (hi - lo + 1)))

    @classmethod
    def point(cls, v: int) -> Pmf:
        return cls(v, np.ones(1))


def empirical_pmf(samples, support: tuple[int, int]) -> Pmf:
    """Normalized histogram of integer ``samples`` over ``support = (lo, hi)``."""
    s = np.asarray(samples, dtype=np.int64).ravel()
    if s.size == 0:
        raise ValueError("no samples")
    lo, hi = support
    if s.min() < lo or s.max() > hi:
        raise ValueError("samples fall outside the support")
    counts = np.bincount(s - lo, minlength=hi - lo + 1).astype(np.float64)
    return Pmf(lo, counts / counts.sum())


def product_pmf(pw: Pmf, px: Pmf) -> Pmf:
    """Distribution of ``w * x`` for independent ``w ~ pw`` and ``x ~ px``."""
    prods = np.multiply.outer(pw.support, px.support).ravel()
    mass = np.multiply.outer(pw.probs, px.probs).ravel()
    lo, hi = int(prods.min()), int(prods.max())
    probs = np.bincount(prods - lo, weights=mass, minlength=hi - lo + 1)
    return Pmf(lo, probs / probs.sum())


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic chain over accumulator values ``lo..hi`` plus overflow (last index)."""

    lo: int
    hi: int
    P: np.ndarray

    @property
    def n_transient(self) -> int:
        return self.hi - self.lo + 1

    @property
    def overflow_index(self) -> int:
        return self.n_transient

    @property
    def Q(self) -> np.ndarray:
        n = self.n_transient
        return self.P[:n, :n]

    @property
    def R(self) -> np.ndarray:
        n = self.n_transient
        return self.P[:n, n:]

    def state_labels(self) -> list[str]:
        return [str(s) for s in range(self.lo, self.hi + 1)] + ["ovfl"]

    def index(self, state) -> int:
        if state == "ovfl":
            return self.overflow_index
        if not self.lo <= state <= self.hi:
            raise ValueError(f"state {state} outside [{self.lo}, {self.hi}]")
        return state - self.lo


def build_transition_matrix(step_dist: Pmf, acc_range: tuple[int, int]) -> TransitionMatrix:
    """``P[s, s'] = Pr(step = s' - s)``; mass leaving ``acc_range`` goes to overflow."""
    lo, hi = acc_range
    if hi < lo:
        raise ValueError("empty accumulator range")
    n = hi - lo + 1
    p = step_dist.probs
    m = p.size
    P = np.zeros((n + 1, n + 1))
    for i in range(n):
        first = i + step_dist.lo  # column reached by the smallest step
        k0, k1 = max(0, -first), min(m, n - first)
        if k0 < k1:
            P[i, first + k0:first + k1] = p[k0:k1]
            P[i, n] = p[:k0].sum() + p[k1:].sum()
        else:
            P[i, n] = p.sum()
    P[n, n] = 1.0
    return TransitionMatrix(lo, hi, P)


@dataclass(frozen=True)
class AbsorptionStats:
    expected_steps: np.ndarray
    fundamental_row_sums: np.ndarray


def absorption_stats(T: TransitionMatrix) -> AbsorptionStats:
    """Expected steps to overflow from every state (the absorbing state gets 0)."""
    n = T.n_transient
    A = np.eye(n) - T.Q
    with warnings.catch_warnings():
        # singularity is reported through OverflowUnreachable below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=True)
    if np.min(np.abs(np.diag(lu))) < SINGULAR_TOL:
        raise OverflowUnreachable("overflow unreachable from some accumulator state")
    t = scipy.linalg.lu_solve((lu, piv), np.ones(n))
    return AbsorptionStats(np.append(t, 0.0), t)


def expected_steps_to_overflow(T: TransitionMatrix, start=0) -> float:
    """Expected number of added terms until the running sum leaves the range."""
    i = T.index(start)
    if i == T.overflow_index:
        return 0.0
    return float(absorption_stats(T).expected_steps[i])


def _mc_chunk(args) -> tuple[int, int]:
    pmf, acc_range, start, seed, max_steps, n, index = args
    rng = stream_rng(seed, index)
    lo, hi = acc_range
    pos = np.full(n, start, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    alive = np.arange(n)
    support, probs = pmf.support, pmf.probs
    k = 0
    while alive.size:
        if k >= max_steps:
            raise RuntimeError("Monte Carlo walk did not terminate; overflow may be unreachable")
        pos[alive] += rng.choice(support, size=alive.size, p=probs)
        steps[alive] += 1
        out = (pos[alive] < lo) | (pos[alive] > hi)
        alive = alive[~out]
        k += 1
    return int(steps.sum()), n


def monte_carlo_absorption(step_dist: Pmf, acc_range: tuple[int, int], trials: int,
                           seed: int, start: int = 0, workers: int | None = None,
                           max_steps: int = 10**7) -> float:
    """Mean number of steps before a random walk from ``start`` leaves ``acc_range``.

    Trials are cut into fixed chunks of ``MC_CHUNK`` walks; chunk ``i`` draws
    from :func:`mgs.parallel.stream_rng` ``(seed, i)``, so the estimate does not
    depend on the number of workers.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    lo, hi = acc_range
    if not lo <= start <= hi:
        return 0.0
    jobs = _chunk_jobs(trials, step_dist, tuple(acc_range), start, seed, max_steps)
    parts = map_chunks(_mc_chunk, jobs, workers)
    return sum(t for t, _ in parts) / trials


def _chunk_jobs(trials: int, *args):
    return [(*args, min(MC_CHUNK, trials - off), i) for i, off in enumerate(range(0, trials, MC_CHUNK))]


def _dot_walk_chunk(args) -> tuple[int, int]:
    wd, xd, acc_range, seed, max_steps, n, index = args
    rng = stream_rng(seed, index)
    lo, hi = acc_range
    pos = np.zeros(n, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    alive = np.arange(n)
    k = 0
    while alive.size:
        if k >= max_steps:
            raise RuntimeError("dot-product walk did not terminate; overflow may be unreachable")
        m = alive.size
        pos[alive] += wd.sample(rng, m) * xd.sample(rng, m)
        steps[alive] += 1
        alive = alive[(pos[alive] >= lo) & (pos[alive] <= hi)]
        k += 1
    return int(steps.sum()), n


def simulate_overflow_free_length(w_dist: IntDist, x_dist: IntDist, acc_range: tuple[int, int],
                                  trials: int, seed: int, workers: int | None = None,
                                  max_steps: int = 10**6) -> float:
    """Mean dot-product length at which the running sum first leaves ``acc_range``.

    Every step draws a fresh weight and activation and adds their product,
    so this is a direct simulation that never looks at the product pmf.
    The count includes the overflowing term, like the chain's absorption time.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    jobs = _chunk_jobs(trials, w_dist, x_dist, tuple(acc_range), seed, max_steps)
    return sum(t for t, _ in map_chunks(_dot_walk_chunk, jobs, workers)) / trials


def _clt_mc_chunk(args) -> list[int]:
    wd, xd, k, limits, seed, n, index = args
    rng = stream_rng(seed, index)
    z = np.abs((wd.sample(rng, n * k) * xd.sample(rng, n * k)).reshape(n, k).sum(axis=1))
    return [int(np.count_nonzero(z > lim)) for lim in limits]


def monte_carlo_overflow_probs(w_dist: IntDist, x_dist: IntDist, k: int, acc_bits,
                               trials: int, seed: int, workers: int | None = None) -> list[float]:
    """Fraction of length-``k`` dot products with ``|sum| > 2**(a-1)``, for each ``a`` in ``acc_bits``.

    All widths are scored on the same simulated sums.
    """
    if trials < 1 or k < 1:
        raise ValueError("trials and k must be positive")
    limits = tuple(1 << (a - 1) for a in acc_bits)
    jobs = _chunk_jobs(trials, w_dist, x_dist, k, limits, seed)
    counts = np.sum(map_chunks(_clt_mc_chunk, jobs, workers), axis=0)
    return [int(c) / trials for c in counts]


def monte_carlo_overflow_prob(w_dist: IntDist, x_dist: IntDist, k: int, acc_bits: int,
                              trials: int, seed: int, workers: int | None = None) -> float:
    return monte_carlo_overflow_probs(w_dist, x_dist, k, (acc_bits,), trials, seed, workers)[0]
