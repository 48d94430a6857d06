"""Empirical distribution functions, KS distances, DKW bands and binomial intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.stats import beta

from .errors import UsageError


class EmpiricalCdf:
    """Right-continuous empirical CDF of a finite sample."""

    def __init__(self, samples: Iterable[float]):
        x = np.sort(np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=float))
        if x.ndim != 1:
            raise UsageError("samples must be one-dimensional")
        if np.isnan(x).any():
            raise UsageError("samples contain NaN")
        self.samples = x
        self.n = x.size

    def __call__(self, x):
        return ecdf_eval(self, x)

    def merge(self, other: "EmpiricalCdf") -> "EmpiricalCdf":
        return EmpiricalCdf(np.concatenate([self.samples, other.samples]))


def ecdf_eval(e: EmpiricalCdf, x):
    """Fraction of samples ``<= x``."""
    if e.n == 0:
        raise UsageError("empirical CDF of an empty sample")
    out = np.searchsorted(e.samples, x, side="right") / e.n
    return float(out) if np.ndim(out) == 0 else out


def ks_distance(e: EmpiricalCdf, F: Callable) -> float:
    """``sup_x |F_n(x) - F(x)|`` for a continuous reference ``F``.

    The supremum is attained at a sample point, approached from the left or
    the right, so both one-sided gaps are taken there.  ``F`` may be
    vectorized; scalar callables are applied pointwise.
    """
    if e.n == 0:
        raise UsageError("KS distance of an empty sample")
    x = e.samples
    try:
        f = np.asarray(F(x), dtype=float)
        if f.shape != x.shape:
            raise TypeError
    except (TypeError, ValueError):
        f = np.array([float(F(v)) for v in x])
    n = e.n
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(n) / n
    return float(max(upper.max(), lower.max()))


def dkw_band(n: int, alpha: float) -> float:
    """DKW half-width ``sqrt(log(2/alpha) / (2n))``."""
    if n < 1:
        raise UsageError(f"need n >= 1, got {n}")
    if not (0.0 < alpha <= 1.0):
        raise UsageError(f"alpha must lie in (0, 1], got {alpha}")
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


def binom_ci(k: int, n: int, alpha: float = 0.05) -> tuple[float, float]:
    """Clopper-Pearson interval of level ``1 - alpha``."""
    if n < 1 or k < 0 or k > n:
        raise UsageError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    if not (0.0 < alpha < 1.0):
        raise UsageError(f"alpha must lie in (0, 1), got {alpha}")
    lo = 0.0 if k == 0 else float(beta.ppf(alpha / 2.0, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1.0 - alpha / 2.0, k + 1, n - k))
    return lo, hi


def binom_upper(k: int, n: int, alpha: float = 0.05) -> float:
    """Upper endpoint of the two-sided Clopper-Pearson interval."""
    return binom_ci(k, n, alpha)[1]


@dataclass(frozen=True)
class TailEstimate:
    k: int
    n: int
    alpha: float = 0.05

    def __post_init__(self):
        if self.n < 1 or not (0 <= self.k <= self.n):
            raise UsageError(f"need 0 <= k <= n and n >= 1, got k={self.k}, n={self.n}")

    @property
    def estimate(self) -> float:
        return self.k / self.n

    @property
    def interval(self) -> tuple[float, float]:
        return binom_ci(self.k, self.n, self.alpha)

    @property
    def upper(self) -> float:
        return self.interval[1]


def nonincreasing(values, slack: float = 0.0) -> bool:
    """True when every later value exceeds no earlier one by more than ``slack``."""
    vals = list(values)
    return all(vals[j] <= vals[i] + slack for i in range(len(vals)) for j in range(i + 1, len(vals)))
