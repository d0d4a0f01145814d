import math

import numpy as np
import pytest

from ehlink import (ArrivalTrace, BoundInput, CircuitLinearCost,
                    CircuitLogCost, LinearCost, LogCost, OfflineInstance,
                    RewardCurve, build_surrogate, et_beneficial,
                    finite_horizon_bounds, inverse_continuous,
                    upper_bound_et, upper_bound_no_et)
from ehlink.offline import evaluate_plan_arrays

LAM = 0.1


def linear_input(mean_tx, mean_rc, beta, slope_tx=1.0, slope_rc=1.0, lam=LAM,
                 rho_max=1000.0):
    reward = RewardCurve(lam)
    s_tx = build_surrogate(LinearCost(slope_tx), reward, rho_max)
    s_rc = build_surrogate(LinearCost(slope_rc), reward, rho_max)
    return BoundInput(s_tx, s_rc, mean_tx, mean_rc, beta, reward)


def circuitry_input(beta=0.15, lam=LAM, e_max=30.0):
    reward = RewardCurve(lam)
    zeta = 7.0
    rho_max = e_max - zeta
    s_tx = build_surrogate(CircuitLinearCost(zeta, 0.01), reward, rho_max)
    s_rc = build_surrogate(CircuitLogCost(zeta, 0.01, 4.0, lam), reward, rho_max)
    return BoundInput(s_tx, s_rc, 2.0, 12.5, beta, reward)


def test_no_transfer_bound_linear_case():
    inp = linear_input(2.0, 12.5, beta=0.15)
    assert upper_bound_no_et(inp) == pytest.approx(math.log(1.2), abs=1e-9)


def test_no_transfer_bound_circuitry_case():
    inp = circuitry_input()
    assert upper_bound_no_et(inp) == pytest.approx(0.0834, abs=1e-3)


def test_no_transfer_bound_symmetric():
    inp = linear_input(3.0, 3.0, beta=0.5)
    assert upper_bound_no_et(inp) == pytest.approx(math.log1p(LAM * 3.0), abs=1e-9)


def test_transfer_bound_circuitry_case():
    et = upper_bound_et(circuitry_input())
    assert et.value == pytest.approx(0.1561, abs=2e-3)
    assert 0.0 < et.keep_fraction < 1.0
    # split accounting
    assert et.usable_rc == pytest.approx(12.5 * et.keep_fraction, abs=1e-9)
    assert et.usable_tx == pytest.approx(2.0 + 0.15 * 12.5 * (1 - et.keep_fraction), abs=1e-9)


def test_transfer_bound_linear_closed_form():
    # slope-1 costs: keep fraction balances the two usable means directly
    b_tx, b_rc, beta = 1.0, 3.0, 0.5
    inp = linear_input(b_tx, b_rc, beta)
    xi_expected = min(1.0, (1.0 / b_rc) * (beta * b_rc + b_tx) / (beta + 1.0))
    et = upper_bound_et(inp)
    assert xi_expected == pytest.approx(5.0 / 9.0)
    assert et.keep_fraction == pytest.approx(xi_expected, abs=1e-9)
    assert et.value == pytest.approx(math.log1p(LAM * b_rc * xi_expected), abs=1e-9)


def test_transfer_bound_reduces_without_efficiency():
    inp = linear_input(2.0, 12.5, beta=0.0)
    assert upper_bound_et(inp).value == pytest.approx(upper_bound_no_et(inp), abs=1e-9)


def test_transfer_beneficial_cases():
    assert et_beneficial(linear_input(2.0, 12.5, beta=0.15))
    # receiver is the bottleneck: transferring cannot help
    assert not et_beneficial(linear_input(12.5, 2.0, beta=0.15))
    # perfectly balanced symmetric link
    assert not et_beneficial(linear_input(3.0, 3.0, beta=1.0))


def test_transfer_bound_never_below_no_transfer():
    rng = np.random.default_rng(0)
    for _ in range(50):
        inp = linear_input(float(rng.uniform(0.5, 10)), float(rng.uniform(0.5, 20)),
                           beta=float(rng.uniform(0, 1)),
                           slope_tx=float(rng.uniform(0.5, 2)),
                           slope_rc=float(rng.uniform(0.5, 2)))
        assert upper_bound_et(inp).value >= upper_bound_no_et(inp) - 1e-9


def test_transfer_bound_nondecreasing_in_efficiency():
    values = [upper_bound_et(circuitry_input(beta=b)).value
              for b in np.arange(0.0, 1.01, 0.1)]
    assert all(b >= a - 1e-9 for a, b in zip(values, values[1:]))


def test_finite_horizon_constant_trace_matches_long_term():
    inp = linear_input(2.0, 12.5, beta=0.15)
    no_et, et = finite_horizon_bounds(inp, ArrivalTrace((2,) * 50), ArrivalTrace((12, 13) * 25))
    assert no_et == pytest.approx(upper_bound_no_et(inp), abs=1e-9)
    assert et.value == pytest.approx(upper_bound_et(inp).value, abs=1e-9)


def test_finite_horizon_empty_second_half_lowers_bounds():
    inp = linear_input(4.0, 12.0, beta=0.3)
    full_tx, full_rc = ArrivalTrace((4,) * 100), ArrivalTrace((12,) * 100)
    half_tx = ArrivalTrace((4,) * 50 + (0,) * 50)
    half_rc = ArrivalTrace((12,) * 50 + (0,) * 50)
    no_full, et_full = finite_horizon_bounds(inp, full_tx, full_rc)
    no_half, et_half = finite_horizon_bounds(inp, half_tx, half_rc)
    assert no_half < no_full
    assert et_half.value < et_full.value
    assert no_half == pytest.approx(math.log1p(LAM * 2.0), abs=1e-9)


def test_blast_plan_reward_grows_with_horizon():
    # Saving everything for one final burst keeps improving as the horizon
    # grows when reward-per-consumed-energy has no concave headroom to spare
    # (cost and reward share the same log shape). The large cost coefficient
    # keeps the burst power representable in floats.
    cost = LogCost(40.0, LAM)
    reward = RewardCurve(LAM)
    mean = 2.0
    rewards = []
    for k in (100, 1_000, 10_000):
        inst = OfflineInstance(k, (mean,) * (k - 1), (mean,) * (k - 1),
                               cost, cost, efficiency=0.0, reward=reward)
        total = mean * (k - 1)
        blast = inverse_continuous(cost, total, 1e250)
        powers = np.zeros(k)
        powers[-1] = blast
        report = evaluate_plan_arrays(inst, powers, np.zeros(k))
        assert report.residual <= 1e-6
        rewards.append(report.objective)
    assert rewards[0] < rewards[1] < rewards[2]
