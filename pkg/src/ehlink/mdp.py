"""Discretized two-battery decision process: action sets, transitions,
average-reward policy iteration and exact policy evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .arrivals import ArrivalProcess
from .consumption import (CostModel, RewardCurve, consume, inverse_discrete,
                          quantized_cost, quantized_cost_floor, received_quanta)

State = tuple[int, int]

# Action-value comparisons: switch only on a clear win so equal-value policies
# cannot cycle, and ties resolve by the fixed preference order.
Q_TIE_TOL = 1e-11
MAX_ITERATIONS = 1000
RVI_DAMPING = 0.5
RVI_SPAN_TOL = 1e-9


class Action(NamedTuple):
    rho: float  # transmit power, quanta
    d: int      # quanta sent from receiver to transmitter


class InfeasibleActionError(ValueError):
    """Action violates a battery constraint in its state."""


class ConvergenceError(RuntimeError):
    """Solver exceeded its iteration budget."""


@dataclass(frozen=True)
class SystemConfig:
    """Full two-device scenario in quantum units.

    rho_max defaults to the largest power whose quantized cost fits in every
    battery, which is also the largest power any state can support.
    """

    e_max_tx: int
    e_max_rc: int
    cost_tx: CostModel
    cost_rc: CostModel
    arrivals_tx: ArrivalProcess
    arrivals_rc: ArrivalProcess
    efficiency: float
    reward: RewardCurve
    rho_max: float | None = None
    allow_transfer: bool = True
    optimistic_rounding: bool = False

    def __post_init__(self):
        if self.e_max_tx < 1 or self.e_max_rc < 1:
            raise ValueError("battery sizes must be >= 1 quantum")
        if not 0 <= self.efficiency <= 1:
            raise ValueError("transfer efficiency must lie in [0, 1]")
        if self.rho_max is None:
            object.__setattr__(self, "rho_max", self._default_rho_max())
        for model, cap in ((self.cost_tx, self.e_max_tx), (self.cost_rc, self.e_max_rc)):
            if self.qd(model, self.rho_max) > cap:
                raise ValueError(
                    f"rho_max={self.rho_max} costs more than a full battery ({cap})")

    def _default_rho_max(self) -> float:
        best = math.inf
        for model, cap in ((self.cost_tx, self.e_max_tx), (self.cost_rc, self.e_max_rc)):
            hi = 1.0
            while consume(model, hi) < cap and hi < 2 ** 40:
                hi *= 2.0
            best = min(best, inverse_discrete(model, cap, hi))
        return best

    def qd(self, model: CostModel, p: float) -> int:
        if self.optimistic_rounding:
            return quantized_cost_floor(model, p)
        return quantized_cost(model, p)

    def qd_tx(self, p: float) -> int:
        return self.qd(self.cost_tx, p)

    def qd_rc(self, p: float) -> int:
        return self.qd(self.cost_rc, p)

    def transfer_gain(self, d: int) -> int:
        return received_quanta(self.efficiency, d, optimistic=self.optimistic_rounding)

    @property
    def n_states(self) -> int:
        return (self.e_max_tx + 1) * (self.e_max_rc + 1)

    def states(self) -> Iterator[State]:
        for e1 in range(self.e_max_tx + 1):
            for e2 in range(self.e_max_rc + 1):
                yield (e1, e2)

    def state_index(self, state: State) -> int:
        return state[0] * (self.e_max_rc + 1) + state[1]


@dataclass(frozen=True)
class OnlinePolicy:
    """Deterministic per-state action map over the full battery grid."""

    rho: np.ndarray  # (e_max_tx+1, e_max_rc+1), float
    d: np.ndarray    # same shape, int

    def action(self, state: State) -> Action:
        return Action(float(self.rho[state]), int(self.d[state]))


@dataclass(frozen=True)
class PolicyEvaluation:
    gain: float
    steady_state: np.ndarray  # (e_max_tx+1, e_max_rc+1)
    bias: np.ndarray          # relative values, anchored at (0, 0)


def is_feasible(state: State, action: Action, cfg: SystemConfig) -> bool:
    e1, e2 = state
    if action.rho < 0 or action.d < 0 or action.rho > cfg.rho_max + 1e-12:
        return False
    return (cfg.qd_tx(action.rho) <= e1
            and cfg.qd_rc(action.rho) + action.d <= e2)


def action_grid(state: State, cfg: SystemConfig) -> list[Action]:
    """Candidate actions for a state.

    Powers are the per-quantum-budget suprema of both devices, clamped to what
    the state and rho_max allow; since the reward grows with power and costs
    are integer quanta, no deterministic policy loses value under this
    restriction. Each power is crossed with every feasible transfer amount.
    """
    e1, e2 = state
    cap = min(inverse_discrete(cfg.cost_tx, e1, cfg.rho_max),
              inverse_discrete(cfg.cost_rc, e2, cfg.rho_max))
    raw = [min(inverse_discrete(cfg.cost_tx, j, cfg.rho_max), cap)
           for j in range(e1 + 1)]
    raw += [min(inverse_discrete(cfg.cost_rc, j, cfg.rho_max), cap)
            for j in range(e2 + 1)]
    raw.sort()
    powers: list[float] = [0.0]
    for rho in raw:
        if rho - powers[-1] < 1e-9:
            # near-identical candidates merge upward; the idle power stays
            # exactly zero so idle actions compare exactly
            if powers[-1] > 0.0:
                powers[-1] = rho
        else:
            powers.append(rho)
    actions = []
    for rho in powers:
        headroom = e2 - cfg.qd_rc(rho)
        max_d = headroom if cfg.allow_transfer else 0
        for d in range(max_d + 1):
            actions.append(Action(rho, d))
    return actions


def transition(state: State, action: Action, cfg: SystemConfig) -> dict[State, float]:
    """Successor distribution for one slot, duplicates merged."""
    if not is_feasible(state, action, cfg):
        raise InfeasibleActionError(f"action {action} infeasible in state {state}")
    e1, e2 = state
    x1 = e1 - cfg.qd_tx(action.rho) + cfg.transfer_gain(action.d)
    x2 = e2 - cfg.qd_rc(action.rho) - action.d
    out: dict[State, float] = {}
    for b1, p1 in enumerate(cfg.arrivals_tx.probs):
        if p1 == 0.0:
            continue
        n1 = min(x1 + b1, cfg.e_max_tx)
        for b2, p2 in enumerate(cfg.arrivals_rc.probs):
            if p2 == 0.0:
                continue
            n2 = min(x2 + b2, cfg.e_max_rc)
            key = (n1, n2)
            out[key] = out.get(key, 0.0) + p1 * p2
    return out


# ---------------------------------------------------------------------------
# Precomputed tables
# ---------------------------------------------------------------------------

class _Tables:
    """Per-config caches: action lists in preference order (larger power first,
    then smaller transfer) and the arrival clamp matrices used to take
    expectations over one slot without enumerating the product support."""

    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        self.n1 = cfg.e_max_tx + 1
        self.n2 = cfg.e_max_rc + 1
        self.clamp_tx = _clamp_matrix(cfg.arrivals_tx, cfg.e_max_tx)
        self.clamp_rc = _clamp_matrix(cfg.arrivals_rc, cfg.e_max_rc)
        self.states = list(cfg.states())
        self.act_rho: list[np.ndarray] = []
        self.act_d: list[np.ndarray] = []
        self.act_x1: list[np.ndarray] = []
        self.act_x2: list[np.ndarray] = []
        self.act_reward: list[np.ndarray] = []
        for state in self.states:
            acts = action_grid(state, cfg)
            acts.sort(key=lambda a: (-a.rho, a.d))
            e1, e2 = state
            rho = np.array([a.rho for a in acts])
            d = np.array([a.d for a in acts], dtype=np.int64)
            cost1 = np.array([cfg.qd_tx(a.rho) for a in acts], dtype=np.int64)
            cost2 = np.array([cfg.qd_rc(a.rho) for a in acts], dtype=np.int64)
            gain = np.array([cfg.transfer_gain(a.d) for a in acts], dtype=np.int64)
            self.act_rho.append(rho)
            self.act_d.append(d)
            self.act_x1.append(np.minimum(e1 - cost1 + gain, cfg.e_max_tx))
            self.act_x2.append(e2 - cost2 - d)
            self.act_reward.append(np.asarray(cfg.reward.value(rho), dtype=float))

    def expected_next(self, h: np.ndarray) -> np.ndarray:
        """W[x1, x2] = E h(next state) given post-action levels (x1, x2)."""
        H = h.reshape(self.n1, self.n2)
        return self.clamp_tx @ H @ self.clamp_rc.T

    def transition_matrix(self, choice: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Dense transition matrix and reward vector for a policy given as
        per-state action indices."""
        n = len(self.states)
        P = np.zeros((n, n))
        r = np.zeros(n)
        for s in range(n):
            a = choice[s]
            row = np.outer(self.clamp_tx[self.act_x1[s][a]],
                           self.clamp_rc[self.act_x2[s][a]])
            P[s] = row.reshape(-1)
            r[s] = self.act_reward[s][a]
        return P, r

    def policy_from_choice(self, choice: np.ndarray) -> OnlinePolicy:
        rho = np.zeros((self.n1, self.n2))
        d = np.zeros((self.n1, self.n2), dtype=np.int64)
        for s, state in enumerate(self.states):
            a = choice[s]
            rho[state] = self.act_rho[s][a]
            d[state] = self.act_d[s][a]
        return OnlinePolicy(rho, d)

    def zero_choice(self) -> np.ndarray:
        choice = np.zeros(len(self.states), dtype=np.int64)
        for s in range(len(self.states)):
            idx = np.flatnonzero((self.act_rho[s] == 0.0) & (self.act_d[s] == 0))
            choice[s] = idx[0]
        return choice


def _clamp_matrix(process: ArrivalProcess, e_max: int) -> np.ndarray:
    """M[x, e'] = P[min(x + B, e_max) = e'] for post-action level x."""
    m = np.zeros((e_max + 1, e_max + 1))
    pmf = process.pmf
    for x in range(e_max + 1):
        for b, p in enumerate(pmf):
            m[x, min(x + b, e_max)] += p
    return m


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

class _NotUnichain(Exception):
    pass


def _poisson_solve(P: np.ndarray, r: np.ndarray, anchor: int) -> tuple[float, np.ndarray]:
    """Average-reward evaluation: gain plus bias anchored at one state.

    Solves gain + h(s) - sum_s' P[s,s'] h(s') = r(s) with h(anchor) = 0; the
    system is nonsingular exactly when the chain has one recurrent class.
    """
    n = len(r)
    M = np.zeros((n, n))
    M[:, 0] = 1.0
    cols = [s for s in range(n) if s != anchor]
    M[:, 1:] = np.eye(n)[:, cols] - P[:, cols]
    try:
        sol = np.linalg.solve(M, r)
    except np.linalg.LinAlgError as exc:
        raise _NotUnichain(str(exc)) from exc
    if not np.all(np.isfinite(sol)) or np.linalg.norm(M @ sol - r, np.inf) > 1e-6:
        raise _NotUnichain("singular evaluation system")
    gain = float(sol[0])
    h = np.zeros(n)
    h[cols] = sol[1:]
    return gain, h


def _stationary_on_class(P: np.ndarray) -> np.ndarray:
    """Stationary distribution of an irreducible stochastic matrix."""
    n = len(P)
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def evaluate_policy(policy: OnlinePolicy, cfg: SystemConfig,
                    tables: _Tables | None = None) -> PolicyEvaluation:
    """Exact long-run behavior of a policy started from empty batteries.

    The steady state is computed on the recurrent classes reachable from
    (0, 0), weighted by absorption probability; states outside them get zero
    mass. The bias comes from the anchored evaluation system when it is
    nonsingular, otherwise from its least-squares solution.
    """
    tables = tables or _Tables(cfg)
    choice = _choice_from_policy(policy, cfg, tables)
    P, r = tables.transition_matrix(choice)
    n = len(r)
    start = cfg.state_index((0, 0))

    reachable = _reachable_set(P, start)
    sub = np.flatnonzero(reachable)
    P_sub = P[np.ix_(sub, sub)]
    n_comp, labels = connected_components(csr_matrix(P_sub > 0), connection="strong")

    # Closed classes: no probability leaves the component.
    closed = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.setdiff1d(np.arange(len(sub)), members)
        if len(outside) == 0 or P_sub[np.ix_(members, outside)].sum() < 1e-15:
            closed.append(members)

    pi = np.zeros(n)
    if len(closed) == 1:
        members = closed[0]
        pi[sub[members]] = _stationary_on_class(P_sub[np.ix_(members, members)])
    else:
        # Reducible under this policy: weight each closed class by the chance
        # of being absorbed into it from the start state.
        absorb = _absorption_weights(P_sub, labels, closed,
                                     int(np.flatnonzero(sub == start)[0]))
        for weight, members in zip(absorb, closed):
            if weight > 0:
                local = _stationary_on_class(P_sub[np.ix_(members, members)])
                pi[sub[members]] += weight * local

    gain = float(pi @ r)
    try:
        _, h = _poisson_solve(P, r, start)
    except _NotUnichain:
        h, *_ = np.linalg.lstsq(np.eye(n) - P + np.ones((n, n)) / n, r - gain, rcond=None)
        h = h - h[start]

    residual = np.abs(pi @ P - pi).sum()
    if residual > 1e-8 or abs(pi.sum() - 1.0) > 1e-10:
        raise ConvergenceError(f"steady state failed its residual check ({residual})")
    return PolicyEvaluation(gain, pi.reshape(tables.n1, tables.n2),
                            h.reshape(tables.n1, tables.n2))


def _reachable_set(P: np.ndarray, start: int) -> np.ndarray:
    n = len(P)
    seen = np.zeros(n, dtype=bool)
    stack = [start]
    seen[start] = True
    while stack:
        s = stack.pop()
        for t in np.flatnonzero(P[s] > 0):
            if not seen[t]:
                seen[t] = True
                stack.append(int(t))
    return seen


def _absorption_weights(P: np.ndarray, labels: np.ndarray, closed: list[np.ndarray],
                        start: int) -> np.ndarray:
    closed_states = np.concatenate(closed)
    transient = np.setdiff1d(np.arange(len(P)), closed_states)
    weights = np.zeros(len(closed))
    for c, members in enumerate(closed):
        if start in members:
            weights[c] = 1.0
            return weights
    Q = P[np.ix_(transient, transient)]
    lhs = np.eye(len(transient)) - Q
    t_index = {s: i for i, s in enumerate(transient)}
    for c, members in enumerate(closed):
        rhs = P[np.ix_(transient, members)].sum(axis=1)
        a = np.linalg.solve(lhs, rhs)
        weights[c] = a[t_index[start]]
    return weights / weights.sum()


def _choice_from_policy(policy: OnlinePolicy, cfg: SystemConfig,
                        tables: _Tables) -> np.ndarray:
    choice = np.zeros(len(tables.states), dtype=np.int64)
    for s, state in enumerate(tables.states):
        act = policy.action(state)
        if not is_feasible(state, act, cfg):
            raise InfeasibleActionError(f"policy action {act} infeasible in {state}")
        rho_match = np.isclose(tables.act_rho[s], act.rho, rtol=0.0, atol=1e-12)
        idx = np.flatnonzero(rho_match & (tables.act_d[s] == act.d))
        if len(idx) == 0:
            # Action not in the candidate grid (heuristics may emit powers off
            # the per-budget suprema): append it.
            _append_action(tables, s, state, act)
            choice[s] = len(tables.act_rho[s]) - 1
        else:
            choice[s] = idx[0]
    return choice


def _append_action(tables: _Tables, s: int, state: State, act: Action) -> None:
    cfg = tables.cfg
    e1, e2 = state
    tables.act_rho[s] = np.append(tables.act_rho[s], act.rho)
    tables.act_d[s] = np.append(tables.act_d[s], act.d)
    x1 = min(e1 - cfg.qd_tx(act.rho) + cfg.transfer_gain(act.d), cfg.e_max_tx)
    x2 = e2 - cfg.qd_rc(act.rho) - act.d
    tables.act_x1[s] = np.append(tables.act_x1[s], x1)
    tables.act_x2[s] = np.append(tables.act_x2[s], x2)
    tables.act_reward[s] = np.append(tables.act_reward[s],
                                     float(cfg.reward.value(act.rho)))


# ---------------------------------------------------------------------------
# Policy iteration
# ---------------------------------------------------------------------------

def policy_iteration(cfg: SystemConfig) -> tuple[OnlinePolicy, PolicyEvaluation]:
    """Average-reward policy iteration over the quantized decision process.

    Evaluation solves the anchored linear system; improvement maximizes the
    action values per state. If a visited policy does not have a single
    recurrent class the whole solve falls back to damped relative value
    iteration, which needs no such structure.
    """
    tables = _Tables(cfg)
    choice = tables.zero_choice()
    anchor = cfg.state_index((0, 0))
    gains: list[float] = []
    for _ in range(MAX_ITERATIONS):
        P, r = tables.transition_matrix(choice)
        try:
            gain, h = _poisson_solve(P, r, anchor)
        except _NotUnichain:
            return _relative_value_iteration(cfg, tables)
        if gains and gain < gains[-1] - 1e-12:
            raise ConvergenceError(
                f"gain decreased across iterations: {gains[-1]} -> {gain}")
        gains.append(gain)
        new_choice, changed = _improve(tables, h, choice)
        if not changed:
            policy = tables.policy_from_choice(choice)
            evaluation = evaluate_policy(policy, cfg, tables)
            return policy, evaluation
        choice = new_choice
    raise ConvergenceError(f"policy iteration exceeded {MAX_ITERATIONS} iterations")


def _improve(tables: _Tables, h: np.ndarray, choice: np.ndarray) -> tuple[np.ndarray, bool]:
    W = tables.expected_next(h)
    new_choice = choice.copy()
    changed = False
    for s in range(len(tables.states)):
        q = tables.act_reward[s] + W[tables.act_x1[s], tables.act_x2[s]]
        best = int(np.flatnonzero(q >= q.max() - Q_TIE_TOL)[0])
        if best != choice[s] and q[best] > q[choice[s]] + Q_TIE_TOL:
            new_choice[s] = best
            changed = True
    return new_choice, changed


def _relative_value_iteration(cfg: SystemConfig, tables: _Tables
                              ) -> tuple[OnlinePolicy, PolicyEvaluation]:
    """Span-seminorm relative value iteration with a self-loop damping that
    removes periodicity without changing gains or optimal policies."""
    n = len(tables.states)
    anchor = cfg.state_index((0, 0))
    h = np.zeros(n)
    tau = RVI_DAMPING
    for _ in range(200_000):
        W = tables.expected_next(h)
        th = np.empty(n)
        for s in range(n):
            q = tables.act_reward[s] + (1 - tau) * W[tables.act_x1[s], tables.act_x2[s]]
            th[s] = tau * h[s] + q.max()
        delta = th - h
        span = float(delta.max() - delta.min())
        h = th - th[anchor]
        if span < RVI_SPAN_TOL:
            break
    else:
        raise ConvergenceError("relative value iteration did not converge")
    W = tables.expected_next(h)
    choice = np.zeros(n, dtype=np.int64)
    for s in range(n):
        q = tables.act_reward[s] + (1 - tau) * W[tables.act_x1[s], tables.act_x2[s]]
        choice[s] = int(np.flatnonzero(q >= q.max() - Q_TIE_TOL)[0])
    policy = tables.policy_from_choice(choice)
    return policy, evaluate_policy(policy, cfg, tables)
