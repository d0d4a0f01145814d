"""Closed-form online policies: greedy, balanced, low-complexity, and the
threshold policies that are optimal under deterministic arrivals."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .consumption import (FLOOR_SNAP, consume, inverse_continuous,
                          inverse_discrete)
from .mdp import Action, OnlinePolicy, State, SystemConfig, is_feasible

BALANCE_TOL = 1e-11


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def greedy_policy(state: State, cfg: SystemConfig) -> Action:
    """Empty at least one battery every slot: transmit at the largest power
    both devices can cover, transfer the receiver's leftover quanta."""
    e1, e2 = state
    rho = min(inverse_discrete(cfg.cost_tx, e1, cfg.rho_max),
              inverse_discrete(cfg.cost_rc, e2, cfg.rho_max))
    d = e2 - cfg.qd_rc(rho) if cfg.allow_transfer else 0
    return Action(rho, d)


def balanced_policy(state: State, cfg: SystemConfig) -> Action:
    """Aim for equal battery levels after the slot while emptying one battery.

    Solved on the continuous battery model: the transmitter-limited branch has
    a closed form; otherwise the transfer amount is found by bisection on the
    (monotone) level-difference residual. The final transfer is floored so the
    receiver constraint holds after quantization.
    """
    e1, e2 = float(state[0]), float(state[1])

    def power_at(d: float) -> float:
        return min(inverse_continuous(cfg.cost_tx, e1, cfg.rho_max),
                   inverse_continuous(cfg.cost_rc, max(e2 - d, 0.0), cfg.rho_max))

    def residual(d: float) -> float:
        rho = power_at(d)
        level_tx = e1 + cfg.efficiency * d - consume(cfg.cost_tx, rho)
        level_rc = e2 - d - consume(cfg.cost_rc, rho)
        return level_tx - level_rc

    rho_tx = inverse_continuous(cfg.cost_tx, e1, cfg.rho_max)
    d_bar = (e2 - consume(cfg.cost_rc, rho_tx)) / (cfg.efficiency + 1.0)
    tx_limited = (0.0 <= d_bar <= e2
                  and rho_tx <= inverse_continuous(cfg.cost_rc, e2 - d_bar, cfg.rho_max) + 1e-12)
    if not tx_limited:
        if residual(0.0) >= 0.0:
            d_bar = 0.0
        else:
            lo, hi = 0.0, e2
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if residual(mid) < 0.0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= BALANCE_TOL:
                    break
            d_bar = 0.5 * (lo + hi)
    d_bar = min(max(d_bar, 0.0), e2)
    if not cfg.allow_transfer:
        d_bar = 0.0
    d = int(math.floor(d_bar + FLOOR_SNAP))
    rho = power_at(float(d))
    return Action(rho, d)


def balanced_policy_linear(state: State, cfg: SystemConfig) -> Action:
    """Closed form of the balanced policy when both costs are identity-linear:
    d = floor((e_rc - e_tx)/(1 + efficiency)) clamped at 0, rho empties the
    smaller remaining battery."""
    e1, e2 = state
    d = max(0, math.floor((e2 - e1) / (1.0 + cfg.efficiency) + FLOOR_SNAP))
    if not cfg.allow_transfer:
        d = 0
    rho = float(min(e1, e2 - d))
    return Action(rho, d)


def low_complexity_policy(state: State, cfg: SystemConfig, keep_fraction: float,
                          mean_rc: float) -> Action:
    """Arrival-statistics policy: cap the power at the rounded balance target
    and send the receiver's expected surplus."""
    e1, e2 = state
    usable_rc = mean_rc * keep_fraction
    target = _round_half_up(inverse_continuous(cfg.cost_rc, usable_rc, cfg.rho_max))
    rho = min(inverse_discrete(cfg.cost_tx, e1, cfg.rho_max),
              inverse_discrete(cfg.cost_rc, e2, cfg.rho_max),
              float(target))
    cost_rc = cfg.qd_rc(rho)
    d = min(e2 - cost_rc, _round_half_up(mean_rc) - cost_rc)
    d = max(d, 0)
    if not cfg.allow_transfer:
        d = 0
    return Action(rho, d)


def threshold_policy_no_et(state: State, cfg: SystemConfig) -> Action:
    """Deterministic-arrival threshold policy without transfer: spend exactly
    the per-slot harvest when both batteries can cover it."""
    e1, e2 = state
    mean_tx = cfg.arrivals_tx.mean
    v = inverse_continuous(cfg.cost_tx, mean_tx, cfg.rho_max)
    if mean_tx <= e1 + 1e-6 and cfg.qd_rc(v) <= e2:
        return Action(v, 0)
    return Action(0.0, 0)


def threshold_policy_et(state: State, cfg: SystemConfig, keep_fraction: float) -> Action:
    """Deterministic-arrival threshold policy with transfer: run at the
    balance-point power and ship the receiver surplus when its battery holds a
    full slot of harvest."""
    e1, e2 = state
    mean_rc = cfg.arrivals_rc.mean
    usable_rc = mean_rc * keep_fraction
    v = inverse_continuous(cfg.cost_rc, usable_rc, cfg.rho_max)
    rho = 0.0
    if usable_rc <= e2 + 1e-6 and cfg.qd_tx(v) <= e1:
        rho = v
    d = 0
    if cfg.allow_transfer and e2 >= mean_rc - 1e-6:
        d = max(0, math.floor(mean_rc + FLOOR_SNAP) - cfg.qd_rc(rho))
        d = min(d, e2 - cfg.qd_rc(rho))
    return Action(rho, d)


def tabulate(policy_fn: Callable[[State, SystemConfig], Action],
             cfg: SystemConfig) -> OnlinePolicy:
    """Materialize a per-state rule into a grid policy, checking feasibility."""
    rho = np.zeros((cfg.e_max_tx + 1, cfg.e_max_rc + 1))
    d = np.zeros((cfg.e_max_tx + 1, cfg.e_max_rc + 1), dtype=np.int64)
    for state in cfg.states():
        act = policy_fn(state, cfg)
        if not is_feasible(state, act, cfg):
            raise ValueError(f"{policy_fn.__name__} produced infeasible {act} in {state}")
        rho[state] = act.rho
        d[state] = act.d
    return OnlinePolicy(rho, d)
