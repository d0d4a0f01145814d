"""Finite-horizon planning with non-causal arrival knowledge: convex programs
for infinite and finite batteries, plus exact plan replay."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .consumption import (CostModel, LinearCost, LogCost, RewardCurve,
                          build_surrogate, consume, inverse_continuous)

SOLVERS = ("CLARABEL", "SCS")
FEASIBILITY_TOL = 1e-6


class SolverError(RuntimeError):
    """The convex solver returned no usable optimum."""


@dataclass(frozen=True)
class OfflineInstance:
    """One finite-horizon scenario: the arrival sequences cover slots
    1..K-1 (energy harvested in a slot is usable from the next one)."""

    horizon: int
    arrivals_tx: tuple[float, ...]
    arrivals_rc: tuple[float, ...]
    cost_tx: CostModel
    cost_rc: CostModel
    efficiency: float
    reward: RewardCurve
    cap_tx: float = math.inf
    cap_rc: float = math.inf
    initial_tx: float = 0.0
    initial_rc: float = 0.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1 slot")
        for seq in (self.arrivals_tx, self.arrivals_rc):
            if len(seq) != self.horizon - 1:
                raise ValueError(f"need {self.horizon - 1} arrivals, got {len(seq)}")
            if any(b < 0 for b in seq):
                raise ValueError("arrivals must be nonnegative")
        if not 0 <= self.efficiency <= 1:
            raise ValueError("transfer efficiency must lie in [0, 1]")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.cap_tx) and math.isfinite(self.cap_rc)


@dataclass(frozen=True)
class OfflinePlan:
    """Per-slot powers and transfers with the replayed objective.

    relaxed_objective is set when the program had to run on the convexified
    cost surrogate; it upper-bounds what the true costs allow.
    """

    powers: tuple[float, ...]
    transfers: tuple[float, ...]
    objective: float
    residual: float
    relaxed_objective: float | None = None


@dataclass(frozen=True)
class CumulativeConstraint:
    """One row of the stacked battery feasibility system:
    q_coeff . q(P) + d_coeff . D <= bound."""

    device: str   # "tx" | "rc"
    start: int    # 1-based first slot the row covers
    end: int      # 1-based last slot
    q_coeff: tuple[float, ...]
    d_coeff: tuple[float, ...]
    bound: float


@dataclass(frozen=True)
class PlanReport:
    objective: float
    residual: float
    violations: tuple[tuple[int, str, float], ...]  # (slot, constraint, amount)
    e_tx: tuple[float, ...]
    e_rc: tuple[float, ...]


def _rows_for_device(inst: OfflineInstance, device: str, finite: bool
                     ) -> list[CumulativeConstraint]:
    K = inst.horizon
    arrivals = inst.arrivals_tx if device == "tx" else inst.arrivals_rc
    cap = inst.cap_tx if device == "tx" else inst.cap_rc
    initial = inst.initial_tx if device == "tx" else inst.initial_rc
    rows = []
    for k in range(1, K + 1):
        starts = range(k, 0, -1) if finite else (1,)
        for i in starts:
            q = np.zeros(K)
            d = np.zeros(K)
            q[i - 1:k] = 1.0
            if device == "tx":
                d[i - 1:k - 1] = -inst.efficiency
            else:
                d[i - 1:k] = 1.0
            bound = float(np.sum(arrivals[i - 1:k - 1]))
            bound += initial if i == 1 else cap
            rows.append(CumulativeConstraint(device, i, k, tuple(q), tuple(d), bound))
    return rows


def build_finite_constraints(inst: OfflineInstance) -> list[CumulativeConstraint]:
    """All K(K+1) cumulative battery constraints for finite caps, ordered by
    slot and, within a slot, from the single-slot row down to the full prefix."""
    if not inst.finite:
        raise ValueError("constraint generation over all windows needs finite caps")
    return _rows_for_device(inst, "tx", True) + _rows_for_device(inst, "rc", True)


def _power_cap(inst: OfflineInstance) -> float:
    """A power no feasible plan can exceed: everything ever available, spent
    in one slot."""
    total_rc = inst.initial_rc + float(np.sum(inst.arrivals_rc))
    total_tx = (inst.initial_tx + float(np.sum(inst.arrivals_tx))
                + inst.efficiency * total_rc)
    if inst.finite:
        total_tx = min(total_tx, inst.cap_tx)
        total_rc = min(total_rc, inst.cap_rc)
    p_tx = _budget_power(inst.cost_tx, total_tx)
    p_rc = _budget_power(inst.cost_rc, total_rc)
    return max(1.0, min(p_tx, p_rc)) * (1.0 + 1e-9)


def _budget_power(model: CostModel, budget: float) -> float:
    if budget <= 0:
        return 0.0
    hi = 1.0
    while consume(model, hi) < budget and hi < 2 ** 60:
        hi *= 2.0
    return inverse_continuous(model, budget, hi)


def _cost_expr(model: CostModel, reward: RewardCurve, y: cp.Variable,
               y_cap: float, extra: list) -> tuple[cp.Expression, bool]:
    """Convex expression for the energy a device spends to earn per-slot
    reward y. Returns (expression, used_relaxation)."""
    lam_g = reward.snr_scale
    k = y.shape[0]
    if isinstance(model, LinearCost):
        return (model.slope / lam_g) * (cp.exp(y) - 1.0), False
    if isinstance(model, LogCost):
        ratio = model.snr_scale / lam_g
        if abs(ratio - 1.0) < 1e-12:
            return model.coeff * y, False
        if ratio < 1.0:
            rows = cp.vstack([np.full(k, math.log(1.0 - ratio)) + 0.0 * y,
                              y + math.log(ratio)])
            return model.coeff * cp.log_sum_exp(rows, axis=0), False
    # Circuitry kinds (and log kinds with a steeper scale than the reward)
    # make cost-of-reward non-convex; run on its convex relaxation, a
    # piecewise-linear overestimate of the cost surrogate.
    p_cap = float(reward.inverse(y_cap))
    surrogate = build_surrogate(model, reward, max(p_cap, 1e-6))
    grid = np.linspace(0.0, y_cap, 65)
    xg = np.array([surrogate.value(float(reward.inverse(t))) for t in grid])
    qv = cp.Variable(k)
    for s in range(len(grid) - 1):
        slope = (xg[s + 1] - xg[s]) / (grid[s + 1] - grid[s])
        extra.append(qv >= xg[s] + slope * (y - grid[s]))
    return qv, True


def _solve(inst: OfflineInstance, allow_transfer: bool) -> OfflinePlan:
    K = inst.horizon
    p_cap = _power_cap(inst)
    y_cap = float(inst.reward.value(p_cap))
    y = cp.Variable(K, nonneg=True)
    d = cp.Variable(K, nonneg=True)

    extra: list = [y <= y_cap]
    q_tx, relaxed_tx = _cost_expr(inst.cost_tx, inst.reward, y, y_cap, extra)
    q_rc, relaxed_rc = _cost_expr(inst.cost_rc, inst.reward, y, y_cap, extra)
    relaxed = relaxed_tx or relaxed_rc
    if not allow_transfer:
        extra.append(d == 0)

    constraints = list(extra)
    for device, expr in (("tx", q_tx), ("rc", q_rc)):
        rows = _rows_for_device(inst, device, inst.finite)
        A_q = np.array([r.q_coeff for r in rows])
        A_d = np.array([r.d_coeff for r in rows])
        rhs = np.array([r.bound for r in rows])
        constraints.append(A_q @ expr + A_d @ d <= rhs)

    problem = cp.Problem(cp.Maximize(cp.sum(y) / K), constraints)
    solution = None
    attempts = (("CLARABEL", {}), ("SCS", {"eps": 1e-9, "max_iters": 200_000}))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for solver, opts in attempts:
            try:
                problem.solve(solver=solver, **opts)
            except (cp.error.SolverError, cp.error.DCPError):
                continue
            if problem.status == cp.OPTIMAL:
                solution = (y.value.copy(), d.value.copy(), float(problem.value))
                break
            if problem.status == cp.OPTIMAL_INACCURATE and solution is None:
                solution = (y.value.copy(), d.value.copy(), float(problem.value))
    if solution is None:
        raise SolverError(f"offline solve failed with status {problem.status!r}")

    y_val, d_val, opt_val = solution
    powers = np.clip(np.asarray(inst.reward.inverse(np.clip(y_val, 0.0, None))),
                     0.0, None)
    transfers = np.clip(d_val, 0.0, None)
    powers, transfers = _repair(inst, powers, transfers)
    plan_obj = float(np.mean(inst.reward.value(powers)))
    report = evaluate_plan_arrays(inst, powers, transfers)
    return OfflinePlan(tuple(float(p) for p in powers),
                       tuple(float(t) for t in transfers),
                       plan_obj, report.residual,
                       relaxed_objective=opt_val if relaxed else None)


def solve_offline_infinite(inst: OfflineInstance, allow_transfer: bool = True) -> OfflinePlan:
    """Optimal plan with unbounded batteries (no overflow can occur)."""
    if inst.finite:
        raise ValueError("instance has finite caps; use solve_offline_finite")
    return _solve(inst, allow_transfer)


def solve_offline_finite(inst: OfflineInstance, allow_transfer: bool = True) -> OfflinePlan:
    """Optimal plan with finite batteries via the stacked window constraints."""
    if not inst.finite:
        raise ValueError("instance has infinite caps; use solve_offline_infinite")
    return _solve(inst, allow_transfer)


def _repair(inst: OfflineInstance, powers: np.ndarray, transfers: np.ndarray
            ) -> tuple[np.ndarray, np.ndarray]:
    """Clip a candidate plan to the exact battery recursions slot by slot.

    Solver tolerance slack (or the cost relaxation) can leave hairline
    violations; clipping restores feasibility while only ever reducing spend.
    """
    K = inst.horizon
    e1, e2 = inst.initial_tx, inst.initial_rc
    p_out = np.zeros(K)
    d_out = np.zeros(K)
    for k in range(K):
        p = min(powers[k],
                inverse_continuous(inst.cost_tx, e1, max(powers[k], 1.0)),
                inverse_continuous(inst.cost_rc, e2, max(powers[k], 1.0)))
        d = min(transfers[k], e2 - consume(inst.cost_rc, p))
        d = max(d, 0.0)
        p_out[k] = p
        d_out[k] = d
        b1 = inst.arrivals_tx[k] if k < K - 1 else 0.0
        b2 = inst.arrivals_rc[k] if k < K - 1 else 0.0
        e1 = min(e1 - consume(inst.cost_tx, p) + inst.efficiency * d + b1, inst.cap_tx)
        e2 = min(e2 - consume(inst.cost_rc, p) - d + b2, inst.cap_rc)
    return p_out, d_out


def evaluate_plan(plan: OfflinePlan, inst: OfflineInstance) -> PlanReport:
    """Replay a plan through the exact min-clamped battery recursions."""
    return evaluate_plan_arrays(inst, np.asarray(plan.powers), np.asarray(plan.transfers))


def evaluate_plan_arrays(inst: OfflineInstance, powers: np.ndarray,
                         transfers: np.ndarray) -> PlanReport:
    K = inst.horizon
    if len(powers) != K or len(transfers) != K:
        raise ValueError(f"plan length does not match horizon {K}")
    e1, e2 = inst.initial_tx, inst.initial_rc
    traj1, traj2 = [], []
    violations = []
    for k in range(K):
        traj1.append(e1)
        traj2.append(e2)
        p, d = float(powers[k]), float(transfers[k])
        if p < -FEASIBILITY_TOL:
            violations.append((k + 1, "negative power", -p))
        if d < -FEASIBILITY_TOL:
            violations.append((k + 1, "negative transfer", -d))
        cost1 = consume(inst.cost_tx, max(p, 0.0))
        cost2 = consume(inst.cost_rc, max(p, 0.0))
        if cost1 > e1 + FEASIBILITY_TOL:
            violations.append((k + 1, "transmit energy", cost1 - e1))
        if cost2 + d > e2 + FEASIBILITY_TOL:
            violations.append((k + 1, "receive energy", cost2 + d - e2))
        b1 = inst.arrivals_tx[k] if k < K - 1 else 0.0
        b2 = inst.arrivals_rc[k] if k < K - 1 else 0.0
        e1 = min(e1 - cost1 + inst.efficiency * d + b1, inst.cap_tx)
        e2 = min(e2 - cost2 - d + b2, inst.cap_rc)
    objective = float(np.mean(inst.reward.value(np.clip(powers, 0.0, None))))
    residual = max((v[2] for v in violations), default=0.0)
    return PlanReport(objective, residual, tuple(violations),
                      tuple(traj1), tuple(traj2))


def plan_rows(plan: OfflinePlan, inst: OfflineInstance) -> list[tuple]:
    """Columnar serialization: (slot, P, D, E_tx, E_rc)."""
    report = evaluate_plan(plan, inst)
    return [(k + 1, plan.powers[k], plan.transfers[k], report.e_tx[k], report.e_rc[k])
            for k in range(inst.horizon)]
