import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfmimo import energy
from cfmimo.config import PowerParams, SystemConfig

P = PowerParams()


def test_table_constants():
    assert energy.adc_power(P, 6) == pytest.approx(91.6544e-3, abs=1e-6)
    assert energy.rf_chain_power(P) == pytest.approx(31.6e-3, abs=1e-15)
    adc, rf = energy.component_powers(P, 6, 4)
    assert adc == energy.adc_power(P, 6) and rf == energy.rf_chain_power(P)
    with pytest.raises(ValueError):
        energy.component_powers(P, math.inf)


@given(st.integers(1, 15))
def test_adc_doubles_per_bit(B):
    assert energy.adc_power(P, B + 1) == 2 * energy.adc_power(P, B)


def test_pa_power():
    cfg = SystemConfig(T=32)
    assert energy.data_fraction(180e3, 10e-3, 32) == pytest.approx(0.98222, abs=1e-5)
    assert energy.pa_power(P, cfg, 2.0) == pytest.approx(4.2705, abs=1e-4)
    assert energy.pa_power(P, cfg, 0.0) == 0.0
    assert energy.data_fraction(180e3, 10e-3, 0) == 1.0
    with pytest.raises(ValueError):
        energy.data_fraction(1.0, 1.0, 2)
    np.testing.assert_allclose(energy.pa_power(P, cfg, np.array([2.0, 0.0])), [energy.pa_power(P, cfg, 2.0), 0.0])


def test_bs_power_composition():
    cfg = SystemConfig(R=4, B_u=6, B_d=6)
    got = energy.bs_power(P, cfg, 4.2705)
    assert got == pytest.approx(4.2705 + 0.0225 + 4 * (2 * 0.0916544 + 0.0316), abs=1e-6)
    assert got == pytest.approx(5.152, abs=1e-3)
    cfg1 = SystemConfig(R=4, B_u=1, B_d=1)
    assert energy.bs_power(P, cfg1, 0.0) == pytest.approx(P.P_LO + 4 * (2 * P.FOM * P.F_s * 2 + energy.rf_chain_power(P)))
    assert energy.bs_power(P, replace(cfg, R=0), 1.5) == pytest.approx(1.5 + P.P_LO)


def test_bs_power_increasing():
    cfg = SystemConfig()
    vals = [energy.bs_power(P, cfg.with_resolution_capacity(B, 16), 1.0) for B in range(1, 9)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    vals = [energy.bs_power(P, replace(cfg, R=R), 1.0) for R in range(1, 5)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_energy_efficiency_arithmetic():
    cfg = SystemConfig(M=1, K=1, T=1, W=1e6)
    frac = energy.data_fraction(cfg.W_c, cfg.T_c, cfg.T)
    # choose P_FH so the fronthaul draws exactly 1 W at C = 10
    params = replace(P, P_FH=1.0 / (cfg.M * cfg.W * 10))
    rate = 2.0 / frac  # prelog * W * rate = 2e6 bits/s
    assert energy.energy_efficiency(rate, 1.0, cfg, 10, params) == pytest.approx(1e6)
    assert energy.energy_efficiency(0.0, 1.0, cfg, 10, params) == 0.0
    assert energy.energy_efficiency(1.0, 1.0, cfg, 20, params) < energy.energy_efficiency(1.0, 1.0, cfg, 10, params)
    with pytest.raises(ValueError):
        energy.energy_efficiency(1.0, 1.0, cfg, math.inf, params)


def test_power_report():
    cfg = SystemConfig(B_u=6, B_d=6)
    rep = energy.power_report(P, cfg, np.array([2.0, 1.0, 0.5, 0.0]), 0.3)
    np.testing.assert_allclose(rep.P_BS, rep.P_PA + P.P_LO + cfg.R * (2 * rep.P_ADC + rep.P_RF), rtol=1e-15)
    assert rep.EE > 0
    assert rep.total == pytest.approx(rep.P_BS.sum() + cfg.M * cfg.W * cfg.C_d * P.P_FH)
    with pytest.raises(ValueError):
        energy.power_report(P, replace(cfg, B_u=4), [1.0] * 4, 0.3)
