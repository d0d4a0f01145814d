"""Per-slot harvested-energy distributions and sampled arrival traces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MEAN_SOLVE_TOL = 1e-12


@dataclass(frozen=True)
class ArrivalProcess:
    """Discrete distribution over harvested quanta per slot, support {0..b_max}."""

    probs: tuple[float, ...]  # probs[b] = P[B = b]

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if len(p) < 1 or np.any(p < -1e-15):
            raise ValueError("probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()}, not 1")
        if self.mean <= 0:
            raise ValueError("mean arrival must be positive")

    @property
    def b_max(self) -> int:
        return len(self.probs) - 1

    @property
    def pmf(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.probs)), self.probs))


@dataclass(frozen=True)
class ArrivalTrace:
    """Integer quanta per slot for one device."""

    values: tuple[int, ...]
    slot_seconds: float = 1.0
    label: str = ""

    def __post_init__(self):
        if len(self.values) < 1:
            raise ValueError("trace must contain at least one slot")
        if any(v < 0 for v in self.values):
            raise ValueError("trace entries must be nonnegative")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.int64)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))


def make_deterministic(b: int) -> ArrivalProcess:
    """Point mass at b quanta per slot."""
    if b <= 0:
        raise ValueError("deterministic arrival must be >= 1")
    probs = [0.0] * (b + 1)
    probs[b] = 1.0
    return ArrivalProcess(tuple(probs))


def make_bernoulli(b: int, p: float) -> ArrivalProcess:
    """Either b quanta (probability p) or nothing."""
    if b <= 0:
        raise ValueError("burst size must be >= 1")
    if not 0 < p <= 1:
        raise ValueError("probability must lie in (0, 1]")
    probs = [0.0] * (b + 1)
    probs[0] = 1.0 - p
    probs[b] = p
    return ArrivalProcess(tuple(probs))


def make_uniform(b_max: int) -> ArrivalProcess:
    """Uniform over {0, ..., b_max}; mean b_max/2."""
    if b_max < 1:
        raise ValueError("b_max must be >= 1")
    return ArrivalProcess(tuple([1.0 / (b_max + 1)] * (b_max + 1)))


def _geometric_mean_of_ratio(r: float, b_max: int) -> float:
    b = np.arange(b_max + 1)
    w = r ** b
    return float(np.dot(b, w) / w.sum())


def make_truncated_geometric(mean_target: float, b_max: int) -> ArrivalProcess:
    """Weights proportional to r^b on {0..b_max}, r solved to hit the mean.

    The mean increases continuously from 0 (r -> 0) through b_max/2 (r = 1,
    the uniform limit) toward b_max (r -> inf), so bisection on r applies.
    """
    if b_max < 1:
        raise ValueError("b_max must be >= 1")
    if not 0 < mean_target < b_max:
        raise ValueError(f"mean {mean_target} infeasible for support 0..{b_max}")
    lo, hi = 1e-12, 1.0
    if mean_target > b_max / 2:
        lo = 1.0
        hi = 2.0
        while _geometric_mean_of_ratio(hi, b_max) < mean_target:
            hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _geometric_mean_of_ratio(mid, b_max) < mean_target:
            lo = mid
        else:
            hi = mid
        if hi - lo < MEAN_SOLVE_TOL * max(1.0, hi):
            break
    r = 0.5 * (lo + hi)
    w = r ** np.arange(b_max + 1)
    return ArrivalProcess(tuple(w / w.sum()))


def make_empirical(trace: ArrivalTrace) -> ArrivalProcess:
    """Normalized histogram of an observed trace over {0..max(trace)}."""
    vals = trace.array
    counts = np.bincount(vals, minlength=int(vals.max()) + 1)
    return ArrivalProcess(tuple(counts / counts.sum()))


def sample(process: ArrivalProcess, k: int, seed: int | np.random.Generator,
           slot_seconds: float = 1.0, label: str = "") -> ArrivalTrace:
    """Draw k i.i.d. slots by inverse-CDF from a seeded generator."""
    if k < 1:
        raise ValueError("need at least one slot")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    values = sample_array(process, k, rng)
    return ArrivalTrace(tuple(int(v) for v in values), slot_seconds, label)


def sample_array(process: ArrivalProcess, k: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized inverse-CDF sampling; the workhorse behind sample()."""
    cdf = np.cumsum(process.pmf)
    u = rng.random(k)
    return np.searchsorted(cdf, u, side="right").astype(np.int64)
