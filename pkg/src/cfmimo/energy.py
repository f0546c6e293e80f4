"""Base-station and fronthaul power consumption and the minimum energy efficiency."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import PowerParams


def _finite_bits(B) -> int:
    if B == math.inf or B != B:
        raise ValueError("energy accounting needs a finite converter resolution")
    if int(B) != B or B < 1:
        raise ValueError(f"resolution must be a positive integer, got {B!r}")
    return int(B)


def adc_power(params: PowerParams, B) -> float:
    return params.FOM * params.F_s * 2.0 ** _finite_bits(B)


def rf_chain_power(params: PowerParams) -> float:
    return 2.0 * params.P_LPF + 2.0 * params.P_M + params.P_PS


def component_powers(params: PowerParams, B, R: int | None = None) -> tuple[float, float]:
    """(P_ADC, P_RF) per converter and per RF chain.  ``R`` is accepted for symmetry only."""
    return adc_power(params, B), rf_chain_power(params)


def data_fraction(W_c: float, T_c: float, T: float) -> float:
    """Share (W_c T_c - T) / (W_c T_c) of the coherence block left for data."""
    n = W_c * T_c
    if not n > T:
        raise ValueError(f"coherence block W_c*T_c={n} must exceed T={T}")
    return (n - T) / n


def pa_power(params: PowerParams, cfg, expected_tx_power) -> np.ndarray | float:
    """Amplifier consumption for an expected radiated power (scalar or per station)."""
    frac = data_fraction(cfg.W_c, cfg.T_c, cfg.T)
    if np.ndim(expected_tx_power):
        return frac * np.asarray(expected_tx_power, float) / params.eta
    return frac * float(expected_tx_power) / params.eta


def bs_power(params: PowerParams, cfg, pa):
    """P_PA + P_LO + R (P_ADC(B_u) + P_DAC(B_d) + P_RF): one ADC and one DAC per chain."""
    conv = adc_power(params, cfg.B_u) + adc_power(params, cfg.B_d)
    return pa + params.P_LO + cfg.R * (conv + rf_chain_power(params))


def fronthaul_power(params: PowerParams, cfg, C: float) -> float:
    if C == math.inf:
        raise ValueError("infinite fronthaul capacity has unbounded fronthaul power")
    return cfg.M * cfg.W * C * params.P_FH


def energy_efficiency(min_rate_mean: float, total_bs_power: float, cfg, C: float,
                      params: PowerParams) -> float:
    """Bits per joule: data-share * W * E[min rate] over BS plus fronthaul power."""
    den = float(total_bs_power) + fronthaul_power(params, cfg, C)
    if not den > 0:
        raise ValueError("total consumed power must be positive")
    return data_fraction(cfg.W_c, cfg.T_c, cfg.T) * cfg.W * float(min_rate_mean) / den


@dataclass
class PowerReport:
    P_ADC: float
    P_RF: float
    P_PA: np.ndarray  # (M,)
    P_BS: np.ndarray  # (M,)
    P_FH: float  # all fronthaul links
    EE: float  # bits/J

    @property
    def total(self) -> float:
        return float(np.sum(self.P_BS)) + self.P_FH


def power_report(params: PowerParams, cfg, tx_power, min_rate_mean: float) -> PowerReport:
    """Assemble the breakdown from per-station expected radiated powers (block averages)."""
    if cfg.B_u != cfg.B_d:
        raise ValueError("energy accounting assumes B_u == B_d")
    p_adc, p_rf = component_powers(params, cfg.B_d)
    pa = np.atleast_1d(pa_power(params, cfg, np.asarray(tx_power, float)))
    bs = np.asarray(bs_power(params, cfg, pa))
    ee = energy_efficiency(min_rate_mean, bs.sum(), cfg, cfg.C_d, params)
    return PowerReport(p_adc, p_rf, pa, bs, fronthaul_power(params, cfg, cfg.C_d), ee)
