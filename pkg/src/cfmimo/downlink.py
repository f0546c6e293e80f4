"""Linear precoders, the conditional SINR lower bound, transmit power and fronthaul rate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fronthaul import capacity_bits, invert_capacity
from .uplink import EffectiveChannel

ZF_COND_LIMIT = 1e12


class RankDeficientError(np.linalg.LinAlgError):
    pass


@dataclass
class PrecoderState:
    kind: str  # "mrt" or "zf"
    F: np.ndarray  # (M, R, K)
    powers: np.ndarray  # (M, K); ZF rows are identical
    sigma_d: np.ndarray  # (M,)

    @property
    def shared_powers(self) -> np.ndarray:
        """Per-user powers of a ZF state."""
        return self.powers[0]


@dataclass
class SinrReport:
    sinr: np.ndarray  # (K,)
    rate: np.ndarray  # (K,) bits/s/Hz
    T0: np.ndarray
    T1: np.ndarray
    T2: np.ndarray
    T3: np.ndarray

    @property
    def min_sinr(self) -> float:
        return float(self.sinr.min())


def mrt_precoder(eff: EffectiveChannel) -> np.ndarray:
    """Precoder columns equal to the effective channel estimates, shape (M, R, K)."""
    return np.ascontiguousarray(np.swapaxes(eff.g_hat, 1, 2))


def stacked_estimate(eff: EffectiveChannel) -> np.ndarray:
    """K x MR matrix whose k-th row is [g_1k^H ... g_Mk^H]."""
    M, K, R = eff.g_hat.shape
    return np.conj(np.swapaxes(eff.g_hat, 0, 1)).reshape(K, M * R)


def zf_precoder(eff: EffectiveChannel, cond_limit: float = ZF_COND_LIMIT) -> np.ndarray:
    """Pseudoinverse of the stacked estimate, split per station into (M, R, K)."""
    M, K, R = eff.g_hat.shape
    if K > M * R:
        raise RankDeficientError(f"ZF needs K <= M*R, got K={K}, M*R={M * R}")
    G = stacked_estimate(eff)
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] <= 0 or s[0] / s[-1] > cond_limit:
        raise RankDeficientError("stacked channel estimate is rank deficient")
    F = np.linalg.pinv(G, rcond=1e-12)  # (MR, K)
    return F.reshape(M, R, K)


def _terms(F, powers, sigma_d, eff: EffectiveChannel, rho_d):
    g, Cg = eff.g_hat, eff.C_gtilde
    sq = np.sqrt(powers)
    inner = np.einsum("mkr,mri->mki", np.conj(g), F)  # g_mk^H f_mi
    quad = np.real(np.einsum("mri,mkrs,msi->mki", np.conj(F), Cg, F))  # f_mi^H Cg_mk f_mi
    coh = np.abs(np.einsum("mki,mi->ki", inner, sq)) ** 2  # |sum_m g_mk^H f_mi sqrt(p_mi)|^2
    lin = np.einsum("mki,mi->ki", quad, powers)
    a = (1.0 - rho_d) ** 2
    T0 = a * np.diagonal(coh).copy()
    T1 = a * np.diagonal(lin).copy()
    off = coh + lin
    T2 = a * (off.sum(axis=1) - np.diagonal(off))
    diag_fpf = np.einsum("mri,mi->mr", np.abs(F) ** 2, powers)
    A_diag = np.abs(g) ** 2 + np.real(np.diagonal(Cg, axis1=-2, axis2=-1))  # (M, K, R)
    T3 = (1.0 - rho_d) * np.einsum("mkr,mr->k", A_diag,
                                   rho_d * diag_fpf + (np.asarray(sigma_d) ** 2)[:, None])
    return T0, T1, T2, T3


def sinr_per_user(state: PrecoderState, eff: EffectiveChannel, rho_d: float, sigma2_d: float,
                  zf_fast: bool = False) -> SinrReport:
    """Per-user SINR of the rate lower bound that treats the aggregate noise as Gaussian.

    With ``zf_fast`` the zero-forcing identities are used: the signal term is
    (1-rho)^2 p_k and the coherent interference from the estimate vanishes.
    """
    T0, T1, T2, T3 = _terms(state.F, state.powers, state.sigma_d, eff, rho_d)
    if zf_fast:
        p = state.powers[0]
        a = (1.0 - rho_d) ** 2
        T0 = a * p
        quad = np.real(np.einsum("mri,mkrs,msi->mki", np.conj(state.F), eff.C_gtilde, state.F))
        lin = a * np.einsum("mki,i->ki", quad, p)
        T2 = lin.sum(axis=1) - np.diagonal(lin)
    sinr = T0 / (T1 + T2 + T3 + sigma2_d)
    return SinrReport(sinr, np.log2(1.0 + sinr), T0, T1, T2, T3)


def transmit_power_pdm(F_m, p_m, sigma_d_m: float, W_m, rho_d: float) -> float:
    """Expected transmit power of one station after the DAC model."""
    F_m = np.asarray(F_m)
    p_m = np.asarray(p_m, float)
    col = np.sum(np.abs(W_m) ** 2, axis=0)  # ||W[:, r]||^2
    WF = np.asarray(W_m) @ F_m
    coherent = float(np.sum(np.abs(WF) ** 2 @ p_m))
    diag_fpf = np.abs(F_m) ** 2 @ p_m
    return ((1.0 - rho_d) ** 2 * coherent
            + rho_d * (1.0 - rho_d) * float(col @ diag_fpf)
            + (1.0 - rho_d) * float(col.sum()) * sigma_d_m ** 2)


def precoded_cov(F_m, p_m) -> np.ndarray:
    F_m = np.asarray(F_m)
    C = (F_m * np.asarray(p_m, float)[None, :]) @ np.conj(F_m.T)
    return 0.5 * (C + np.conj(C.T))


def fronthaul_rate_cdm(F_m, p_m, sigma_d_m: float) -> float:
    """log2 det(I + F P F^H / sigma^2); +inf for sigma = 0 with nonzero signal."""
    return capacity_bits(precoded_cov(F_m, p_m), sigma_d_m ** 2)


def solve_sigma_d(F_m, p_m, C_d: float) -> float:
    """Compression-noise std that makes the fronthaul rate equal C_d."""
    if C_d == math.inf:
        return 0.0
    return math.sqrt(invert_capacity(precoded_cov(F_m, p_m), C_d))


def station_powers(state: PrecoderState, W, rho_d) -> np.ndarray:
    return np.array([transmit_power_pdm(state.F[m], state.powers[m], state.sigma_d[m], W[m], rho_d)
                     for m in range(state.F.shape[0])])


def station_rates(state: PrecoderState) -> np.ndarray:
    return np.array([fronthaul_rate_cdm(state.F[m], state.powers[m], state.sigma_d[m])
                     for m in range(state.F.shape[0])])


def power_coefficients(F, W, rho_d: float) -> np.ndarray:
    """e[m, k] such that the station power is sum_k e[m, k] p[m, k] + f[m]."""
    F = np.asarray(F)
    W = np.asarray(W)
    col = np.sum(np.abs(W) ** 2, axis=1)  # (M, R)
    WF = W @ F  # (M, N, K)
    coherent = np.sum(np.abs(WF) ** 2, axis=1)
    diag = np.einsum("mr,mrk->mk", col, np.abs(F) ** 2)
    return (1.0 - rho_d) ** 2 * coherent + rho_d * (1.0 - rho_d) * diag


def noise_power_offset(W, sigma_d, rho_d: float) -> np.ndarray:
    """f[m] = (1-rho) tr(W W^H) sigma_m^2."""
    tr = np.sum(np.abs(np.asarray(W)) ** 2, axis=(1, 2))
    return (1.0 - rho_d) * tr * np.asarray(sigma_d, float) ** 2


@dataclass
class DownlinkSetup:
    """Everything the power optimizers need besides the effective channel."""

    W: np.ndarray  # (M, N, R)
    rho_d: float
    sigma2_d: float
    P_d: float
    C_d: float

    @classmethod
    def from_config(cls, cfg, W) -> "DownlinkSetup":
        from .rf import distortion_factor
        return cls(np.asarray(W), distortion_factor(cfg.B_d), cfg.sigma2_d, cfg.P_d, cfg.C_d)


def uniform_start(F, setup: DownlinkSetup, shared: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Uniform starting powers P_d/(2 K max e) and the matching codebook noise.

    Stations that would exceed the power budget are scaled back jointly in
    (p, sigma^2), which leaves their fronthaul rate unchanged.
    """
    M, R, K = F.shape
    e = power_coefficients(F, setup.W, setup.rho_d)
    emax = float(e.max())
    p0 = setup.P_d / (2.0 * K * emax) if emax > 0 else 0.0
    powers = np.full((M, K), p0)
    sigma = np.array([solve_sigma_d(F[m], powers[m], setup.C_d) for m in range(M)])
    return project_power(F, powers, sigma, setup, shared)


def project_power(F, powers, sigma, setup: DownlinkSetup, shared: bool = False):
    """Joint (p, sigma^2) scaling by min(P_d / P_dm, 1) per station.

    With ``shared`` (ZF) a single factor, the smallest one, is applied to
    every station so the per-user powers stay common.
    """
    state = PrecoderState("", F, powers, sigma)
    pdm = station_powers(state, setup.W, setup.rho_d)
    with np.errstate(divide="ignore"):
        kappa = np.where(pdm > 0, setup.P_d / pdm, np.inf)
    scale = np.minimum(kappa, 1.0)
    if shared:
        scale = np.full_like(scale, scale.min())
    return powers * scale[:, None], sigma * np.sqrt(scale)
