import math

import numpy as np
import pytest

from ehlink import (BoundInput, LinearCost, RewardCurve, SystemConfig,
                    build_surrogate, evaluate_policy, make_deterministic,
                    make_uniform, sample, simulate, upper_bound_et,
                    upper_bound_no_et)
from ehlink.heuristics import (balanced_policy, balanced_policy_linear,
                               threshold_policy_et, threshold_policy_no_et,
                               greedy_policy, low_complexity_policy, tabulate)
from ehlink.mdp import is_feasible
from conftest import circuitry_config, plain_config

LAM = 0.1


def unit_linear_config(e_tx=12, e_rc=12, beta=0.15, arr_tx=None, arr_rc=None):
    return SystemConfig(e_tx, e_rc, LinearCost(1.0), LinearCost(1.0),
                        arr_tx or make_deterministic(2),
                        arr_rc or make_uniform(5),
                        efficiency=beta, reward=RewardCurve(LAM))


# ---------------------------------------------------------------------------
# Greedy
# ---------------------------------------------------------------------------

def test_greedy_splits_leftover():
    act = greedy_policy((5, 8), unit_linear_config())
    assert act.rho == pytest.approx(5.0, abs=1e-9)
    assert act.d == 3


def test_greedy_empty_transmitter_ships_everything():
    act = greedy_policy((0, 7), unit_linear_config())
    assert act.rho == pytest.approx(0.0, abs=1e-8)
    assert act.d == 7


def test_greedy_empty_receiver_idles():
    act = greedy_policy((7, 0), unit_linear_config())
    assert act.rho == pytest.approx(0.0, abs=1e-8)
    assert act.d == 0


def test_greedy_always_empties_a_battery():
    cfg = circuitry_config(e_max_tx=9, e_max_rc=9)
    for state in cfg.states():
        act = greedy_policy(state, cfg)
        left_tx = state[0] - cfg.qd_tx(act.rho)
        left_rc = state[1] - cfg.qd_rc(act.rho) - act.d
        assert min(left_tx, left_rc) == 0


# ---------------------------------------------------------------------------
# Balanced
# ---------------------------------------------------------------------------

def test_balanced_matches_hand_computation():
    act = balanced_policy((2, 10), unit_linear_config(beta=0.15))
    assert act.d == math.floor(8 / 1.15)  # = 6
    assert act.rho == pytest.approx(2.0, abs=1e-9)


def test_balanced_leaves_level_pair_alone():
    for level in (0, 3, 7):
        act = balanced_policy((level, level), unit_linear_config(beta=0.4))
        assert act.d == 0
        assert act.rho == pytest.approx(float(level), abs=1e-9)


def test_balanced_empty_transmitter_zero_efficiency():
    act = balanced_policy((0, 5), unit_linear_config(beta=0.0))
    assert act.d == 5
    assert act.rho == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("beta", [0.0, 0.15, 0.5, 1.0])
def test_balanced_equals_linear_closed_form(beta):
    cfg = unit_linear_config(e_tx=14, e_rc=14, beta=beta)
    for state in cfg.states():
        general = balanced_policy(state, cfg)
        closed = balanced_policy_linear(state, cfg)
        assert general.d == closed.d, state
        assert general.rho == pytest.approx(closed.rho, abs=1e-9), state


def test_balanced_linear_positive_part():
    cfg = unit_linear_config(beta=0.15)
    act = balanced_policy_linear((10, 2), cfg)
    assert act == (2.0, 0)
    assert balanced_policy_linear((0, 0), cfg) == (0.0, 0)


# ---------------------------------------------------------------------------
# Low complexity
# ---------------------------------------------------------------------------

def test_lcp_idles_without_transmit_energy():
    cfg = unit_linear_config()
    act = low_complexity_policy((0, 9), cfg, keep_fraction=0.5, mean_rc=2.5)
    assert act.rho == pytest.approx(0.0, abs=1e-8)


def test_lcp_deterministic_arrivals_achieve_transfer_bound():
    # matched parity and unit efficiency keep every quantity integral, so the
    # stationary behavior hits the bound exactly
    b_tx, b_rc, beta = 2, 6, 1.0
    cfg = SystemConfig(12, 12, LinearCost(1.0), LinearCost(1.0),
                       make_deterministic(b_tx), make_deterministic(b_rc),
                       efficiency=beta, reward=RewardCurve(LAM))
    reward = cfg.reward
    s_tx = build_surrogate(cfg.cost_tx, reward, cfg.rho_max)
    s_rc = build_surrogate(cfg.cost_rc, reward, cfg.rho_max)
    inp = BoundInput(s_tx, s_rc, float(b_tx), float(b_rc), beta, reward)
    et = upper_bound_et(inp)
    policy = tabulate(lambda s, c: low_complexity_policy(s, c, et.keep_fraction,
                                                         float(b_rc)), cfg)
    ev = evaluate_policy(policy, cfg)
    assert ev.gain == pytest.approx(et.value, abs=1e-6)


# ---------------------------------------------------------------------------
# Threshold (threshold) policies
# ---------------------------------------------------------------------------

def test_threshold_no_transfer_reaches_its_bound():
    cfg = SystemConfig(6, 6, LinearCost(1.0), LinearCost(1.0),
                       make_deterministic(2), make_deterministic(5),
                       efficiency=0.0, reward=RewardCurve(LAM))
    policy = tabulate(threshold_policy_no_et, cfg)
    tx = sample(cfg.arrivals_tx, 5_000, seed=1)
    rc = sample(cfg.arrivals_rc, 5_000, seed=2)
    res = simulate(policy, tx, rc, cfg)
    tail = np.mean(cfg.reward.value(res.rho[100:]))
    assert tail == pytest.approx(math.log1p(LAM * 2), abs=1e-9)


def test_threshold_below_capacity_waits():
    cfg = SystemConfig(6, 6, LinearCost(1.0), LinearCost(1.0),
                       make_deterministic(2), make_deterministic(5),
                       efficiency=0.0, reward=RewardCurve(LAM))
    assert threshold_policy_no_et((1, 6), cfg).rho == 0.0
    assert threshold_policy_no_et((2, 1), cfg).rho == 0.0


def test_threshold_with_transfer_reaches_transfer_bound():
    b_tx, b_rc = 2, 6
    cfg = SystemConfig(8, 8, LinearCost(1.0), LinearCost(1.0),
                       make_deterministic(b_tx), make_deterministic(b_rc),
                       efficiency=1.0, reward=RewardCurve(LAM))
    reward = cfg.reward
    inp = BoundInput(build_surrogate(cfg.cost_tx, reward, cfg.rho_max),
                     build_surrogate(cfg.cost_rc, reward, cfg.rho_max),
                     float(b_tx), float(b_rc), 1.0, reward)
    et = upper_bound_et(inp)
    policy = tabulate(lambda s, c: threshold_policy_et(s, c, et.keep_fraction), cfg)
    tx = sample(cfg.arrivals_tx, 10_000, seed=3)
    rc = sample(cfg.arrivals_rc, 10_000, seed=4)
    res = simulate(policy, tx, rc, cfg)
    tail = np.mean(cfg.reward.value(res.rho[100:]))
    assert tail == pytest.approx(et.value, abs=1e-9)
    # the transfer rule ships exactly the receiver surplus in steady slots
    steady_d = res.d[200:]
    assert set(steady_d.tolist()) == {(b_rc - b_tx) // 2}


# ---------------------------------------------------------------------------
# Feasibility fuzz across model kinds
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("make_cfg", [
    lambda: unit_linear_config(e_tx=30, e_rc=30, beta=0.15),
    lambda: plain_config(),
    lambda: circuitry_config(),
    lambda: circuitry_config(zeta=3.0, lam=1.0),
], ids=["linear", "log", "circuit", "circuit_high_snr"])
def test_heuristics_feasible_everywhere(make_cfg):
    cfg = make_cfg()
    reward = cfg.reward
    inp = BoundInput(build_surrogate(cfg.cost_tx, reward, cfg.rho_max),
                     build_surrogate(cfg.cost_rc, reward, cfg.rho_max),
                     cfg.arrivals_tx.mean, cfg.arrivals_rc.mean,
                     cfg.efficiency, reward)
    keep = upper_bound_et(inp).keep_fraction
    mean_rc = cfg.arrivals_rc.mean
    rules = [greedy_policy, balanced_policy,
             lambda s, c: low_complexity_policy(s, c, keep, mean_rc),
             threshold_policy_no_et,
             lambda s, c: threshold_policy_et(s, c, keep)]
    for state in cfg.states():
        for rule in rules:
            act = rule(state, cfg)
            assert is_feasible(state, act, cfg), (rule, state, act)
