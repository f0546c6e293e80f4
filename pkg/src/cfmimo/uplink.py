"""Uplink training, observation statistics, fronthaul codebook and LMMSE estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .config import MAX_OBSERVATION_DIM
from .fronthaul import invert_capacity
from .netgen import ChannelDraw, ChannelStats, clamp_psd
from .rf import aqnm_noise_cov


def training_matrix(T: int, K: int, P_u: float) -> np.ndarray:
    """First K columns of the size-T DFT matrix scaled so each column has energy T*P_u."""
    if T < K:
        raise ValueError(f"training length T={T} must be >= K={K}")
    t = np.arange(T)[:, None]
    k = np.arange(K)[None, :]
    return math.sqrt(P_u) * np.exp(-2j * np.pi * t * k / T)


def psi_matrix(X_u: np.ndarray, W_m: np.ndarray) -> np.ndarray:
    """Effective observation operator X_u^* kron W_m^H of size RT x NK."""
    return np.kron(np.conj(X_u), np.conj(W_m.T))


def observation_model(X_u, W_m, C_h_m, sigma2_u: float, rho_u: float):
    """Return (Psi_m, C_y) for the quantized pilot observation of one station.

    C_y = (1-rho)^2 (Psi C_h Psi^H + sigma2_u I_T kron W^H W) + C_q with the
    AQNM noise covariance C_q = rho(1-rho) diag(Psi C_h Psi^H + sigma2_u I_T kron W^H W).
    """
    Psi = psi_matrix(X_u, W_m)
    if Psi.shape[0] > MAX_OBSERVATION_DIM:
        raise ValueError(f"observation dimension {Psi.shape[0]} exceeds {MAX_OBSERVATION_DIM}")
    T = X_u.shape[0]
    S = Psi @ C_h_m @ np.conj(Psi.T) + sigma2_u * np.kron(np.eye(T), np.conj(W_m.T) @ W_m)
    S = 0.5 * (S + np.conj(S.T))
    C_y = (1.0 - rho_u) ** 2 * S + aqnm_noise_cov(S, rho_u)
    return Psi, C_y


def solve_sigma_u(C_y, T: int, C_u: float) -> float:
    """Compression-noise std that spends exactly T*C_u bits per coherence block."""
    if C_u == math.inf:
        return 0.0
    return math.sqrt(invert_capacity(C_y, T * C_u))


@dataclass
class StationEstimate:
    sigma_u: float
    C_y: np.ndarray
    h_hat: np.ndarray | None  # (K, N) or None in covariance-only mode
    C_hhat: np.ndarray  # (K, N, N)
    C_htilde: np.ndarray  # (K, N, N)
    C_hhat_full: np.ndarray  # (NK, NK)


def lmmse_estimate(y_hat, Psi, C_h_m, C_y, sigma_u: float, rho_u: float, K: int) -> StationEstimate:
    """LMMSE estimate of the stacked channel from the decompressed observation.

    ``y_hat`` may be None, in which case only the covariances are returned.
    """
    NK = C_h_m.shape[0]
    N = NK // K
    C_hy = (1.0 - rho_u) * C_h_m @ np.conj(Psi.T)
    C_yhat = C_y + sigma_u ** 2 * np.eye(C_y.shape[0])
    try:
        chol = sla.cho_factor(C_yhat, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular decompressed-observation covariance") from exc
    A = sla.solve_triangular(chol[0], np.conj(C_hy.T), lower=True)
    C_hhat_full = np.conj(A.T) @ A
    C_hhat_full = 0.5 * (C_hhat_full + np.conj(C_hhat_full.T))
    blocks = np.stack([C_hhat_full[k * N:(k + 1) * N, k * N:(k + 1) * N] for k in range(K)])
    C_hk = np.stack([C_h_m[k * N:(k + 1) * N, k * N:(k + 1) * N] for k in range(K)])
    C_htilde = clamp_psd(C_hk - blocks)
    h_hat = None
    if y_hat is not None:
        h_hat = (C_hy @ sla.cho_solve(chol, y_hat)).reshape(K, N)
    return StationEstimate(sigma_u, C_y, h_hat, blocks, C_htilde, C_hhat_full)


def sample_observation(h_m, Psi, W_m, s_diag, sigma2_u, rho_u, sigma_u, rng) -> np.ndarray:
    """Draw a decompressed observation with Gaussianized quantization noise.

    ``h_m`` is the (K, N) channel of one station and ``s_diag`` the diagonal of
    the pre-quantization covariance, which sets the AQNM noise level.
    """
    RT = Psi.shape[0]
    N = W_m.shape[0]
    T = RT // W_m.shape[1]
    noise = math.sqrt(sigma2_u / 2) * (rng.standard_normal((N, T)) + 1j * rng.standard_normal((N, T)))
    v = (np.conj(W_m.T) @ noise).reshape(-1, order="F")
    q_var = rho_u * (1 - rho_u) * np.asarray(s_diag, float)
    q = np.sqrt(q_var / 2) * (rng.standard_normal(RT) + 1j * rng.standard_normal(RT))
    e = sigma_u / math.sqrt(2) * (rng.standard_normal(RT) + 1j * rng.standard_normal(RT))
    return (1 - rho_u) * (Psi @ h_m.reshape(-1) + v) + q + e


@dataclass
class UplinkEstimate:
    sigma_u: np.ndarray  # (M,)
    h_hat: np.ndarray | None  # (M, K, N)
    C_hhat: np.ndarray  # (M, K, N, N)
    C_htilde: np.ndarray  # (M, K, N, N)


@dataclass
class EffectiveChannel:
    g_hat: np.ndarray  # (M, K, R)
    C_gtilde: np.ndarray  # (M, K, R, R)


def estimate_uplink(stats: ChannelStats, W, X_u, sigma2_u, rho_u, C_u,
                    draw: ChannelDraw | None = None, rng=None) -> UplinkEstimate:
    """Run codebook design and LMMSE estimation at every station.

    Without ``draw`` only covariances are produced (enough for the NMSE).
    """
    M, K, N, _ = stats.cov.shape
    T = X_u.shape[0]
    sig = np.zeros(M)
    C_hhat = np.zeros_like(stats.cov)
    C_htilde = np.zeros_like(stats.cov)
    h_hat = None if draw is None else np.zeros((M, K, N), complex)
    for m in range(M):
        C_h_m = stats.station_cov(m)
        Psi, C_y = observation_model(X_u, W[m], C_h_m, sigma2_u, rho_u)
        sig[m] = solve_sigma_u(C_y, T, C_u)
        y_hat = None
        if draw is not None:
            # on the diagonal C_y = (1-rho) S
            s_diag = np.real(np.diagonal(C_y)) / (1.0 - rho_u)
            y_hat = sample_observation(draw.h[m], Psi, W[m], s_diag, sigma2_u, rho_u, sig[m], rng)
        est = lmmse_estimate(y_hat, Psi, C_h_m, C_y, sig[m], rho_u, K)
        C_hhat[m] = est.C_hhat
        C_htilde[m] = est.C_htilde
        if draw is not None:
            h_hat[m] = est.h_hat
    return UplinkEstimate(sig, h_hat, C_hhat, C_htilde)


def effective_channel(estimate: UplinkEstimate, W) -> EffectiveChannel:
    """Project estimates and error covariances through the RF combiners."""
    W = np.asarray(W)
    WH = np.conj(np.swapaxes(W, -1, -2))  # (M, R, N)
    g_hat = np.einsum("mrn,mkn->mkr", WH, estimate.h_hat)
    C_gt = WH[:, None] @ estimate.C_htilde @ W[:, None]
    C_gt = 0.5 * (C_gt + np.conj(np.swapaxes(C_gt, -1, -2)))
    return EffectiveChannel(g_hat, C_gt)


def nmse(stats: ChannelStats, estimate: UplinkEstimate) -> float:
    den = float(np.real(np.trace(stats.cov, axis1=-2, axis2=-1)).sum())
    if den <= 0:
        raise ZeroDivisionError("channel has zero energy")
    return float(np.real(np.trace(estimate.C_htilde, axis1=-2, axis2=-1)).sum()) / den
