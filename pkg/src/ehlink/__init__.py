"""Joint transmission and energy-transfer policies for a two-device
energy-harvesting link: closed-form bounds, exact online optimization,
heuristics, offline convex planning, and trace-driven simulation."""

from .arrivals import (ArrivalProcess, ArrivalTrace, make_bernoulli,
                       make_deterministic, make_empirical,
                       make_truncated_geometric, make_uniform, sample)
from .bounds import (BoundInput, TransferBound, et_beneficial,
                     finite_horizon_bounds, upper_bound_et, upper_bound_no_et)
from .consumption import (CircuitLinearCost, CircuitLogCost, CostDomainError,
                          CostModel, EnvelopeError, LinearCost, LogCost,
                          RewardCurve, SurrogateCost, build_surrogate, consume,
                          discretize, inverse_continuous, inverse_discrete,
                          quantized_cost, secant_surrogate)
from .heuristics import (balanced_policy, balanced_policy_linear,
                         threshold_policy_et, threshold_policy_no_et,
                         greedy_policy, low_complexity_policy, tabulate)
from .mdp import (Action, ConvergenceError, InfeasibleActionError,
                  OnlinePolicy, PolicyEvaluation, SystemConfig, action_grid,
                  evaluate_policy, policy_iteration, transition)
from .offline import (CumulativeConstraint, OfflineInstance, OfflinePlan,
                      PlanReport, SolverError, build_finite_constraints,
                      evaluate_plan, plan_rows, solve_offline_finite,
                      solve_offline_infinite)
from .sim import (SimulationError, SimulationResult, compare, improvement,
                  plan_policy, simulate)

__version__ = "0.1.0"
