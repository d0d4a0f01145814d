import math

import numpy as np
import pytest

from ehlink import (CircuitLinearCost, CircuitLogCost, CostDomainError,
                    LinearCost, LogCost, RewardCurve, build_surrogate, consume,
                    discretize, inverse_continuous, inverse_discrete,
                    quantized_cost, secant_surrogate)

LAM = 0.1

MODELS = {
    "linear": LinearCost(1.0),
    "log": LogCost(4.0, LAM),
    "circuit_linear": CircuitLinearCost(fixed_cost=7.0, ramp_end=0.01),
    "circuit_log": CircuitLogCost(fixed_cost=7.0, ramp_end=0.01, coeff=4.0, snr_scale=LAM),
}


def test_linear_identity_slope():
    assert consume(LinearCost(1.0), 5.0) == 5.0


def test_circuit_log_matches_direct_evaluation():
    # 7.01 - 4 ln(1.001) + 4 ln(3.3), worked out by hand
    model = CircuitLogCost(fixed_cost=7.0, ramp_end=0.01, coeff=4.0, snr_scale=0.1)
    expected = 7.01 - 4 * math.log(1.001) + 4 * math.log(3.3)
    assert consume(model, 23.0) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(11.7816919, abs=1e-6)


@pytest.mark.parametrize("model", MODELS.values(), ids=MODELS.keys())
def test_zero_power_costs_nothing(model):
    assert consume(model, 0.0) == 0.0


def test_negative_power_rejected():
    with pytest.raises(CostDomainError):
        consume(LinearCost(1.0), -0.5)
    with pytest.raises(CostDomainError):
        consume(LinearCost(1.0), 5.0, rho_max=4.0)


@pytest.mark.parametrize("model", [MODELS["circuit_linear"], MODELS["circuit_log"]],
                         ids=["circuit_linear", "circuit_log"])
def test_continuous_at_ramp_end(model):
    below = consume(model, model.ramp_end * (1 - 1e-12))
    above = consume(model, model.ramp_end)
    assert abs(below - above) < 1e-9


@pytest.mark.parametrize("model", MODELS.values(), ids=MODELS.keys())
def test_nondecreasing_and_concave_on_grid(model):
    ps = np.linspace(0.0, 23.0, 1000)
    qs = np.array([consume(model, p) for p in ps])
    assert np.all(np.diff(qs) >= -1e-12)
    slopes = np.diff(qs) / np.diff(ps)
    assert np.all(np.diff(slopes) <= 1e-9)


def test_discretize_examples():
    qd = discretize(LinearCost(1.0))
    assert qd(2.3) == 3
    assert qd(0.0) == 0
    assert discretize(CircuitLinearCost(7.0, 0.01))(1.0) == 8  # 7 + 1 exactly


def test_discretize_integer_costs_stay_exact():
    qd = discretize(LinearCost(1.0))
    for j in range(1, 20):
        assert qd(float(j)) == j


def test_inverse_discrete_linear_identity():
    assert inverse_discrete(LinearCost(1.0), 5, rho_max=30.0) == pytest.approx(5.0, abs=1e-9)


def test_inverse_discrete_log_closed_form():
    # coeff * ln(1 + s P) = 4  =>  P = (e - 1)/s
    model = LogCost(4.0, 0.1)
    expected = (math.e - 1.0) / 0.1
    assert inverse_discrete(model, 4, rho_max=100.0) == pytest.approx(expected, abs=1e-7)


def test_inverse_discrete_zero_budget():
    # The quantizer's float-noise guard admits a sliver of power at zero cost,
    # so the supremum sits a few nano-quanta above zero.
    assert inverse_discrete(LogCost(4.0, 0.1), 0, rho_max=30.0) == pytest.approx(0.0, abs=1e-8)


def test_inverse_discrete_negative_budget_rejected():
    with pytest.raises(CostDomainError):
        inverse_discrete(LinearCost(1.0), -1, rho_max=10.0)


def test_inverse_discrete_saturates_at_rho_max():
    assert inverse_discrete(LinearCost(1.0), 100, rho_max=30.0) == 30.0


@pytest.mark.parametrize("model", MODELS.values(), ids=MODELS.keys())
def test_budget_roundtrip(model):
    # Spending the returned power stays inside the budget; one epsilon more
    # does not (unless the power cap is what stopped us).
    rho_max = 23.0
    qd = discretize(model)
    for j in range(0, quantized_cost(model, rho_max) + 1):
        p = inverse_discrete(model, j, rho_max)
        assert qd(p) <= j
        if p < rho_max - 1e-9:
            assert qd(p + 1e-6) > j


# ---------------------------------------------------------------------------
# Surrogates
# ---------------------------------------------------------------------------

def _tangency_oracle():
    """Independent solve of the two tangency conditions for the ramped-linear
    model with fixed_cost 7 and snr scale 0.1: the straight envelope segment
    from the origin touches the curve where 1 - 3/(10 y) = ln y with
    y = 1 + 0.1 (x - 7)."""
    lo, hi = 1.5, 4.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if 1.0 - 3.0 / (10.0 * mid) - math.log(mid) > 0:
            lo = mid
        else:
            hi = mid
    y = 0.5 * (lo + hi)
    x_bar = 10.0 * y - 3.0
    slope = 0.1 / y
    return x_bar, slope


def test_envelope_tangent_matches_independent_solve():
    reward = RewardCurve(LAM)
    surrogate = build_surrogate(MODELS["circuit_linear"], reward, rho_max=23.0)
    assert surrogate.construction == "envelope"
    chords = [p for p in surrogate.pieces if p.kind == "chord"]
    assert len(chords) == 1
    x_bar, slope = _tangency_oracle()
    assert chords[0].x_lo == 0.0
    assert chords[0].x_hi == pytest.approx(x_bar, abs=0.02)
    assert chords[0].slope == pytest.approx(slope, abs=2e-4)


def test_envelope_concave_input_returns_model():
    reward = RewardCurve(LAM)
    for model in (MODELS["linear"], MODELS["log"]):
        surrogate = build_surrogate(model, reward, rho_max=30.0)
        assert surrogate.construction == "exact"
        ps = np.linspace(0.0, 30.0, 500)
        gap = max(abs(surrogate.value(p) - consume(model, p)) for p in ps)
        assert gap < 1e-9


def test_degenerate_envelope_falls_back_to_secant():
    reward = RewardCurve(LAM)
    surrogate = build_surrogate(MODELS["circuit_log"], reward, rho_max=23.0)
    assert surrogate.construction == "secant"
    kept = build_surrogate(MODELS["circuit_log"], reward, rho_max=23.0,
                           secant_if_degenerate=False)
    assert kept.construction == "envelope"
    assert len(kept.pieces) == 1 and kept.pieces[0].kind == "chord"


@pytest.mark.parametrize("model", MODELS.values(), ids=MODELS.keys())
@pytest.mark.parametrize("builder", [build_surrogate, secant_surrogate],
                         ids=["envelope", "secant"])
def test_surrogate_invariants(model, builder):
    reward = RewardCurve(LAM)
    rho_max = 23.0
    surrogate = builder(model, reward, rho_max)
    ps = np.linspace(0.0, rho_max, 800)
    values = np.array([surrogate.value(p) for p in ps])
    costs = np.array([consume(model, p) for p in ps])
    assert np.all(values <= costs + 1e-9)
    assert np.all(values >= -1e-12)
    assert np.all(np.diff(values) > -1e-12)
    # induced reward-per-energy map is concave
    xs = np.linspace(0.0, surrogate.x_max, 800)
    rewards = np.array([surrogate.reward_at_energy(x) for x in xs])
    second = np.diff(rewards, 2)
    assert np.all(second <= 1e-7)


@pytest.mark.parametrize("model", MODELS.values(), ids=MODELS.keys())
def test_surrogate_inverse_roundtrip(model):
    reward = RewardCurve(LAM)
    surrogate = build_surrogate(model, reward, rho_max=23.0)
    for x in np.linspace(0.0, surrogate.x_max, 200):
        p = surrogate.inverse(float(x))
        assert surrogate.value(p) == pytest.approx(float(x), abs=1e-6)


def test_inverse_continuous_clamps():
    model = LinearCost(2.0)
    assert inverse_continuous(model, -1.0, 10.0) == 0.0
    assert inverse_continuous(model, 100.0, 10.0) == 10.0
    assert inverse_continuous(model, 6.0, 10.0) == pytest.approx(3.0, abs=1e-9)
