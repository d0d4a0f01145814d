"""Energy-cost curves for a transmit/receive pair, their integer-quantum forms,
and the concave cost surrogates that back the closed-form reward bounds.

All powers and energies are expressed in energy quanta; conversion to Joules
lives in the CLI layer.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable

import numpy as np

# Snap tolerances: costs are compared against integer quantum budgets, so the
# ceil/floor must not flip on float noise when the true value is an integer.
CEIL_SNAP = 1e-9
FLOOR_SNAP = 1e-9
BISECT_TOL = 1e-12

# Grid size for sampling a (consumed energy, reward) curve when building the
# concave envelope.
ENVELOPE_SAMPLES = 10_000


class CostDomainError(ValueError):
    """Requested power lies outside the model's domain."""


class EnvelopeError(RuntimeError):
    """The concave-envelope construction failed on a degenerate curve."""


def _bisect_leq(f: Callable[[float], float], target: float, lo: float, hi: float,
                tol: float = BISECT_TOL) -> float:
    """Largest x in [lo, hi] with f(x) <= target, for nondecreasing f."""
    if f(lo) > target:
        return lo
    if f(hi) <= target:
        return hi
    for _ in range(4000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:  # interval collapsed to adjacent floats
            break
        if f(mid) <= target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return lo


# ---------------------------------------------------------------------------
# Cost models
# ---------------------------------------------------------------------------

class CostModel:
    """Continuous, increasing, concave energy cost q(p) with q(0) = 0."""

    def value(self, p: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class LinearCost(CostModel):
    """q(p) = slope * p."""

    slope: float = 1.0

    def __post_init__(self):
        if self.slope <= 0:
            raise ValueError("slope must be positive")

    def value(self, p):
        return self.slope * p


@dataclass(frozen=True)
class LogCost(CostModel):
    """q(p) = coeff * ln(1 + snr_scale * p)."""

    coeff: float
    snr_scale: float

    def __post_init__(self):
        if self.coeff <= 0 or self.snr_scale <= 0:
            raise ValueError("coeff and snr_scale must be positive")

    def value(self, p):
        return self.coeff * math.log1p(self.snr_scale * p)


@dataclass(frozen=True)
class CircuitLinearCost(CostModel):
    """Start-up ramp to a fixed circuitry cost, then unit-slope linear.

    q(p) = (fixed_cost + ramp_end)/ramp_end * p   for p < ramp_end,
           fixed_cost + p                          otherwise.
    """

    fixed_cost: float
    ramp_end: float

    def __post_init__(self):
        if self.fixed_cost < 0 or self.ramp_end <= 0:
            raise ValueError("need fixed_cost >= 0 and ramp_end > 0")

    def value(self, p):
        if p < self.ramp_end:
            return (self.fixed_cost + self.ramp_end) / self.ramp_end * p
        return self.fixed_cost + p


@dataclass(frozen=True)
class CircuitLogCost(CostModel):
    """Start-up ramp to a fixed circuitry cost, then a logarithmic branch.

    The log branch is shifted so the curve is continuous at ramp_end:
    q(p) = fixed_cost + ramp_end - coeff*ln(1 + snr_scale*ramp_end)
           + coeff*ln(1 + snr_scale*p)   for p >= ramp_end.
    """

    fixed_cost: float
    ramp_end: float
    coeff: float
    snr_scale: float

    def __post_init__(self):
        if self.fixed_cost < 0 or self.ramp_end <= 0:
            raise ValueError("need fixed_cost >= 0 and ramp_end > 0")
        if self.coeff <= 0 or self.snr_scale <= 0:
            raise ValueError("coeff and snr_scale must be positive")

    def value(self, p):
        if p < self.ramp_end:
            return (self.fixed_cost + self.ramp_end) / self.ramp_end * p
        shift = self.fixed_cost + self.ramp_end \
            - self.coeff * math.log1p(self.snr_scale * self.ramp_end)
        return shift + self.coeff * math.log1p(self.snr_scale * p)


def _breakpoint(model: CostModel) -> float | None:
    if isinstance(model, (CircuitLinearCost, CircuitLogCost)):
        return model.ramp_end
    return None


# ---------------------------------------------------------------------------
# Reward curve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RewardCurve:
    """Per-slot reward g(x) = ln(1 + snr_scale * x); the normalized rate."""

    snr_scale: float

    def __post_init__(self):
        if self.snr_scale <= 0:
            raise ValueError("snr_scale must be positive")

    def value(self, x):
        return np.log1p(self.snr_scale * x)

    def inverse(self, y):
        return np.expm1(y) / self.snr_scale


# ---------------------------------------------------------------------------
# Evaluation, quantization and inverses
# ---------------------------------------------------------------------------

def consume(model: CostModel, p: float, rho_max: float | None = None) -> float:
    """Energy (in quanta, real-valued) consumed at transmit power p."""
    if p < 0:
        raise CostDomainError(f"power {p} is negative")
    if rho_max is not None and p > rho_max + CEIL_SNAP:
        raise CostDomainError(f"power {p} exceeds rho_max {rho_max}")
    return model.value(p)


def quantized_cost(model: CostModel, p: float) -> int:
    """Integer-quantum cost: ceiling of q(p), snapped against float noise."""
    return max(0, math.ceil(consume(model, p) - CEIL_SNAP))


def quantized_cost_floor(model: CostModel, p: float) -> int:
    """Floor-rounded cost, the optimistic counterpart of quantized_cost."""
    return max(0, math.floor(consume(model, p) + FLOOR_SNAP))


def discretize(model: CostModel) -> Callable[[float], int]:
    """Return the integer-quantum cost function p -> ceil(q(p))."""
    return lambda p: quantized_cost(model, p)


def received_quanta(efficiency: float, d: int, optimistic: bool = False) -> int:
    """Quanta arriving at the transmitter when d quanta are sent."""
    raw = efficiency * d
    if optimistic:
        return max(0, math.ceil(raw - CEIL_SNAP))
    return max(0, math.floor(raw + FLOOR_SNAP))


def inverse_discrete(model: CostModel, j: int, rho_max: float) -> float:
    """Largest power in [0, rho_max] whose quantized cost stays within j quanta.

    This is the supremum of the preimage of {0, ..., j} under ceil(q(.)),
    located by bisection; ties on a cost plateau resolve to the plateau's
    right edge.
    """
    if j < 0:
        raise CostDomainError(f"quantum budget {j} is negative")
    if quantized_cost(model, rho_max) <= j:
        return rho_max
    # Bisection approaches the budget boundary from below, so the quantized
    # cost of the result never exceeds j even before the ceiling's noise snap.
    return _bisect_leq(model.value, float(j), 0.0, rho_max)


def inverse_continuous(model: CostModel, x: float, rho_max: float) -> float:
    """Power p in [0, rho_max] with q(p) = x, clamped at the domain edges."""
    if x <= 0:
        return 0.0
    if model.value(rho_max) <= x:
        return rho_max
    return _bisect_leq(model.value, x, 0.0, rho_max)


# ---------------------------------------------------------------------------
# Concave cost surrogates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvelopePiece:
    """One segment of a surrogate cost curve.

    kind 'curve' copies the true cost model, 'chord' is a straight segment of
    the (consumed energy, reward) envelope, and 'line' is straight in power.
    Coordinates: x = consumed energy, y = reward, p = transmit power.
    """

    kind: str
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    p_lo: float
    p_hi: float

    @property
    def slope(self) -> float:
        """Reward per unit of consumed energy across the piece."""
        return (self.y_hi - self.y_lo) / (self.x_hi - self.x_lo)


@dataclass(frozen=True)
class SurrogateCost:
    """A cost curve at or below the true model whose reward-per-energy map is
    concave, which is what the closed-form bounds need.

    `construction` records how it was built: 'exact' (the model itself was
    already usable), 'envelope' (upper concave envelope of the energy/reward
    curve) or 'secant' (straight line from the origin to the curve's end).
    """

    model: CostModel
    reward: RewardCurve
    rho_max: float
    pieces: tuple[EnvelopePiece, ...]
    construction: str

    @property
    def x_max(self) -> float:
        return self.pieces[-1].x_hi

    def _piece_by_power(self, p: float) -> EnvelopePiece:
        bounds = [piece.p_hi for piece in self.pieces]
        idx = min(bisect_right(bounds, p), len(self.pieces) - 1)
        return self.pieces[idx]

    def _piece_by_energy(self, x: float) -> EnvelopePiece:
        bounds = [piece.x_hi for piece in self.pieces]
        idx = min(bisect_right(bounds, x), len(self.pieces) - 1)
        return self.pieces[idx]

    def value(self, p: float) -> float:
        """Surrogate consumption at power p."""
        if p < 0:
            raise CostDomainError(f"power {p} is negative")
        p = min(p, self.rho_max)
        piece = self._piece_by_power(p)
        if piece.kind == "curve":
            return self.model.value(p)
        if piece.kind == "chord":
            return piece.x_lo + (float(self.reward.value(p)) - piece.y_lo) / piece.slope
        # 'line': straight in power
        frac = (p - piece.p_lo) / (piece.p_hi - piece.p_lo)
        return piece.x_lo + frac * (piece.x_hi - piece.x_lo)

    def inverse(self, x: float) -> float:
        """Power whose surrogate consumption equals x; clamps to [0, rho_max]."""
        if x <= 0:
            return 0.0
        if x >= self.x_max:
            return self.rho_max
        piece = self._piece_by_energy(x)
        if piece.kind == "curve":
            return _bisect_leq(self.model.value, x, piece.p_lo, piece.p_hi)
        if piece.kind == "chord":
            return float(self.reward.inverse(piece.y_lo + piece.slope * (x - piece.x_lo)))
        frac = (x - piece.x_lo) / (piece.x_hi - piece.x_lo)
        return piece.p_lo + frac * (piece.p_hi - piece.p_lo)

    def reward_at_energy(self, x: float) -> float:
        """Reward earned when the surrogate consumes x quanta (the envelope)."""
        return float(self.reward.value(self.inverse(x)))


def _sample_powers(model: CostModel, rho_max: float) -> np.ndarray:
    """Power grid for envelope sampling, refined across any start-up ramp."""
    bp = _breakpoint(model)
    if bp is None or bp >= rho_max:
        return np.linspace(0.0, rho_max, ENVELOPE_SAMPLES + 1)
    coarse = np.linspace(0.0, rho_max, ENVELOPE_SAMPLES - 1500)
    ramp = np.linspace(0.0, bp, 1500, endpoint=False)
    return np.unique(np.concatenate([coarse, ramp, [bp]]))


def _slopes_nonincreasing(xs: np.ndarray, ys: np.ndarray, tol: float = 1e-9) -> bool:
    dx = np.diff(xs)
    slopes = np.diff(ys) / dx
    worst = np.max(np.diff(slopes) - tol * np.maximum(1.0, np.abs(slopes[:-1])))
    return bool(worst <= 0)


def secant_surrogate(model: CostModel, reward: RewardCurve, rho_max: float) -> SurrogateCost:
    """The always-valid straight-line surrogate from the origin to q(rho_max).

    Concavity of q makes the end-to-end secant a lower bound on q everywhere,
    and a linear surrogate keeps the induced reward-per-energy map concave.
    """
    x_max = consume(model, rho_max)
    piece = EnvelopePiece("line", 0.0, x_max, 0.0, float(reward.value(rho_max)),
                          0.0, rho_max)
    return SurrogateCost(model, reward, rho_max, (piece,), "secant")


def build_surrogate(model: CostModel, reward: RewardCurve, rho_max: float,
                    secant_if_degenerate: bool = True) -> SurrogateCost:
    """Construct the surrogate cost for a model over powers [0, rho_max].

    If reward-per-consumed-energy is already concave the model itself is
    returned (pieces = one 'curve' segment). Otherwise the upper concave
    envelope of the sampled (consumed energy, reward) curve is built with a
    monotone-chain hull; hull edges that skip samples become chords, the rest
    copy the model. When the whole envelope collapses to a single chord the
    construction degenerates (the surrogate would just be a reparameterized
    reward curve); by default the linear secant is used for that case instead.
    """
    if rho_max <= 0:
        raise EnvelopeError("rho_max must be positive")
    ps = _sample_powers(model, rho_max)
    xs = np.array([model.value(p) for p in ps])
    ys = np.asarray(reward.value(ps), dtype=float)

    keep = np.concatenate([[True], np.diff(xs) > 1e-12])
    ps, xs, ys = ps[keep], xs[keep], ys[keep]
    if len(xs) < 3 or xs[-1] <= 0:
        raise EnvelopeError("cost curve is degenerate over the given range")

    if _slopes_nonincreasing(xs, ys):
        piece = EnvelopePiece("curve", 0.0, float(xs[-1]), 0.0, float(ys[-1]),
                              0.0, rho_max)
        return SurrogateCost(model, reward, rho_max, (piece,), "exact")

    hull = _upper_hull(xs, ys)
    pieces = _hull_to_pieces(hull, ps, xs, ys, reward)
    if len(pieces) == 1 and pieces[0].kind == "chord" and secant_if_degenerate:
        return secant_surrogate(model, reward, rho_max)
    out = SurrogateCost(model, reward, rho_max, tuple(pieces), "envelope")
    _check_surrogate(out)
    return out


def _upper_hull(xs: np.ndarray, ys: np.ndarray) -> list[int]:
    hull: list[int] = []
    for i in range(len(xs)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a])
            if cross >= 0:  # middle vertex is on or below the outer chord
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def _hull_to_pieces(hull: list[int], ps, xs, ys, reward: RewardCurve) -> list[EnvelopePiece]:
    # An edge that skips samples and sits strictly above them is a chord;
    # everything else follows the model curve. Consecutive curve edges merge.
    edge_is_chord = []
    for a, b in zip(hull[:-1], hull[1:]):
        if b - a == 1:
            edge_is_chord.append(False)
            continue
        slope = (ys[b] - ys[a]) / (xs[b] - xs[a])
        seg = slice(a + 1, b)
        gap = np.max(ys[a] + slope * (xs[seg] - xs[a]) - ys[seg])
        edge_is_chord.append(gap > 1e-9 * max(1.0, abs(ys[b])))

    pieces: list[EnvelopePiece] = []
    e = 0
    while e < len(edge_is_chord):
        a = hull[e]
        if edge_is_chord[e]:
            b = hull[e + 1]
            pieces.append(EnvelopePiece("chord", float(xs[a]), float(xs[b]),
                                        float(ys[a]), float(ys[b]),
                                        float(reward.inverse(ys[a])),
                                        float(reward.inverse(ys[b]))))
            e += 1
        else:
            while e < len(edge_is_chord) and not edge_is_chord[e]:
                e += 1
            b = hull[e] if e < len(hull) else hull[-1]
            pieces.append(EnvelopePiece("curve", float(xs[a]), float(xs[b]),
                                        float(ys[a]), float(ys[b]),
                                        float(ps[a]), float(ps[b])))
    return pieces


def _check_surrogate(s: SurrogateCost) -> None:
    ps = np.linspace(0.0, s.rho_max, 512)
    prev = -math.inf
    for p in ps:
        v = s.value(float(p))
        if v > s.model.value(p) + 1e-9:
            raise EnvelopeError(f"surrogate exceeds the cost model at p={p}")
        if v <= prev - 1e-12:
            raise EnvelopeError(f"surrogate is not increasing near p={p}")
        prev = v
