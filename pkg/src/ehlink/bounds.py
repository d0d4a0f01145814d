"""Closed-form reward upper bounds for the link, with and without energy transfer."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .arrivals import ArrivalTrace
from .consumption import RewardCurve, SurrogateCost

KEEP_FRACTION_TOL = 1e-10


@dataclass(frozen=True)
class BoundInput:
    """Everything the bound formulas need: surrogates, mean arrivals, transfer
    efficiency and the reward curve."""

    surrogate_tx: SurrogateCost
    surrogate_rc: SurrogateCost
    mean_tx: float
    mean_rc: float
    efficiency: float
    reward: RewardCurve

    def __post_init__(self):
        if self.mean_tx <= 0 or self.mean_rc <= 0:
            raise ValueError("mean arrivals must be positive")
        if not 0 <= self.efficiency <= 1:
            raise ValueError("transfer efficiency must lie in [0, 1]")

    def usable_tx(self, keep_fraction: float) -> float:
        """Mean quanta per slot the transmitter can spend when the receiver
        keeps the given fraction of its own harvest."""
        return self.mean_tx + self.efficiency * self.mean_rc * (1.0 - keep_fraction)

    def usable_rc(self, keep_fraction: float) -> float:
        return self.mean_rc * keep_fraction


@dataclass(frozen=True)
class TransferBound:
    """Reward bound under energy transfer, plus the balancing split."""

    value: float
    keep_fraction: float
    usable_tx: float
    usable_rc: float


def upper_bound_no_et(inp: BoundInput) -> float:
    """Reward bound when no energy is transferred: the slower device caps the
    sustainable power, read off through its surrogate."""
    p_tx = inp.surrogate_tx.inverse(inp.mean_tx)
    p_rc = inp.surrogate_rc.inverse(inp.mean_rc)
    return float(inp.reward.value(min(p_tx, p_rc)))


def upper_bound_et(inp: BoundInput) -> TransferBound:
    """Reward bound with receiver-to-transmitter energy transfer.

    The transmitter-side sustainable power falls as the receiver keeps more of
    its harvest while the receiver-side power rises, so the min of the two is
    maximized at their crossing (or at keep_fraction = 1 when they never meet).
    """
    def gap(xi: float) -> float:
        return (inp.surrogate_tx.inverse(inp.usable_tx(xi))
                - inp.surrogate_rc.inverse(inp.usable_rc(xi)))

    if gap(1.0) >= 0.0:
        xi = 1.0
    else:
        lo, hi = 0.0, 1.0
        while hi - lo > KEEP_FRACTION_TOL:
            mid = 0.5 * (lo + hi)
            if gap(mid) >= 0.0:
                lo = mid
            else:
                hi = mid
        xi = 0.5 * (lo + hi)
    power = inp.surrogate_rc.inverse(inp.usable_rc(xi))
    return TransferBound(float(inp.reward.value(power)), xi,
                         inp.usable_tx(xi), inp.usable_rc(xi))


def et_beneficial(inp: BoundInput) -> bool:
    """True when transfer strictly raises the bound (receiver is not the
    bottleneck). Meaningful when the surrogates coincide with the models."""
    return upper_bound_et(inp).keep_fraction < 1.0 - 1e-12


def finite_horizon_bounds(inp: BoundInput, trace_tx: ArrivalTrace,
                          trace_rc: ArrivalTrace) -> tuple[float, TransferBound]:
    """Bounds over a finite horizon: long-term means swapped for trace means."""
    finite = dataclasses.replace(inp, mean_tx=trace_tx.mean, mean_rc=trace_rc.mean)
    return upper_bound_no_et(finite), upper_bound_et(finite)
