import dataclasses

import pytest

from ehlink import (CircuitLinearCost, CircuitLogCost, LinearCost, LogCost,
                    RewardCurve, SystemConfig, make_truncated_geometric,
                    make_uniform)


def circuitry_config(lam=0.1, zeta=7.0, e_max_tx=30, e_max_rc=30, beta=0.15,
                     **kwargs) -> SystemConfig:
    """Two-device setup with circuitry costs: ramped linear transmitter,
    ramped log receiver, geometric/uniform harvests."""
    return SystemConfig(
        e_max_tx, e_max_rc,
        CircuitLinearCost(fixed_cost=zeta, ramp_end=0.01),
        CircuitLogCost(fixed_cost=zeta, ramp_end=0.01, coeff=4.0, snr_scale=lam),
        make_truncated_geometric(2.0, 5), make_uniform(25),
        efficiency=beta, reward=RewardCurve(lam), **kwargs)


def plain_config(lam=0.1, e_max_tx=30, e_max_rc=30, beta=0.15, **kwargs) -> SystemConfig:
    """Same scenario without circuitry overhead: identity-linear transmitter,
    pure-log receiver."""
    return SystemConfig(
        e_max_tx, e_max_rc, LinearCost(1.0), LogCost(4.0, lam),
        make_truncated_geometric(2.0, 5), make_uniform(25),
        efficiency=beta, reward=RewardCurve(lam), **kwargs)


def without_transfer(cfg: SystemConfig) -> SystemConfig:
    return dataclasses.replace(cfg, allow_transfer=False)


@pytest.fixture(scope="session")
def baseline():
    return circuitry_config()


@pytest.fixture(scope="session")
def baseline_no_circuitry():
    return plain_config()
