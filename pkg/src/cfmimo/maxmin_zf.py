"""Max-min fair power control with ZF precoding.

With the interference nulled at the estimate, every user's SINR is a ratio
of functions linear in the shared power vector P.  Fixing a target level t
turns "all SINRs equal t" into a K x K linear system whose solution is the
componentwise smallest P reaching t, so feasibility at t is decided by a
single solve plus the per-station power and fronthaul checks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .downlink import (DownlinkSetup, PrecoderState, fronthaul_rate_cdm, noise_power_offset,
                       power_coefficients, sinr_per_user, solve_sigma_d, transmit_power_pdm,
                       uniform_start, zf_precoder)
from .maxmin_mrt import AO_MAX_ROUNDS, AO_RTOL, MAX_DOUBLINGS, FairnessResult
from .uplink import EffectiveChannel

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
CHECK_TOL = 1e-9


@dataclass
class ZfSystem:
    Mmat: np.ndarray  # (K, K) coefficient of p_i in user k's denominator
    n: np.ndarray  # (K,) power-independent part of the denominator
    gain: float  # (1 - rho)^2

    def sinr(self, P) -> np.ndarray:
        P = np.asarray(P, float)
        return self.gain * P / (self.Mmat @ P + self.n)


def assemble_linear_system(eff: EffectiveChannel, F, sigma_d, rho_d: float, sigma2_d: float) -> ZfSystem:
    g, Cg = eff.g_hat, eff.C_gtilde
    one = 1.0 - rho_d
    quad = np.real(np.einsum("mri,mkrs,msi->ki", np.conj(F), Cg, F))
    A_diag = np.abs(g) ** 2 + np.real(np.diagonal(Cg, axis1=-2, axis2=-1))  # (M, K, R)
    dac = np.einsum("mkr,mri->ki", A_diag, np.abs(F) ** 2)
    Mmat = one ** 2 * quad + rho_d * one * dac
    n = sigma2_d + one * np.einsum("mkr,m->k", A_diag, np.asarray(sigma_d, float) ** 2)
    return ZfSystem(np.maximum(Mmat, 0.0), n, one ** 2)


@dataclass
class ZfCheck:
    feasible: bool
    P: np.ndarray | None
    reason: str = ""


def zf_feasibility(t: float, sys: ZfSystem, F, W, sigma_d, P_d: float, C_d: float,
                   rho_d: float) -> ZfCheck:
    """Solve ((1-rho)^2 I - t Mmat) P = t n and test the station constraints."""
    K = sys.n.size
    A = sys.gain * np.eye(K) - t * sys.Mmat
    if not np.isfinite(A).all() or np.linalg.cond(A) > COND_LIMIT:
        return ZfCheck(False, None, "ill-conditioned")
    P = sla.lu_solve(sla.lu_factor(A), t * sys.n)
    if np.any(P < 0):
        return ZfCheck(False, P, "negative power")
    for m in range(F.shape[0]):
        if transmit_power_pdm(F[m], P, sigma_d[m], W[m], rho_d) > P_d + CHECK_TOL:
            return ZfCheck(False, P, f"power budget at station {m}")
        if fronthaul_rate_cdm(F[m], P, sigma_d[m]) > C_d + CHECK_TOL:
            return ZfCheck(False, P, f"fronthaul capacity at station {m}")
    return ZfCheck(True, P)


@dataclass
class ZfBisection:
    t: float
    P: np.ndarray | None
    feasible: bool
    solves: int


def bisection_power_zf(check: Callable[[float], ZfCheck], t_min: float, t_max: float, eps: float,
                       P_min=None) -> ZfBisection:
    """Largest level t in the bracket whose equality solution passes ``check``.

    ``P_min`` is a known feasible point at t_min; without it t_min itself is
    tested (t_min = 0 counts as feasible with P = 0).
    """
    if not (t_max > t_min >= 0 and eps > 0):
        raise ValueError("need t_max > t_min >= 0 and eps > 0")
    solves = 0
    if P_min is None:
        if t_min == 0:
            P_min = None
        else:
            solves += 1
            r = check(t_min)
            if not r.feasible:
                return ZfBisection(t_min, None, False, solves)
            P_min = r.P
    lo, P_lo = t_min, P_min
    hi = t_max
    for _ in range(MAX_DOUBLINGS + 1):
        solves += 1
        r = check(hi)
        if not r.feasible:
            break
        lo, P_lo, hi = hi, r.P, 2.0 * hi
    while hi - lo > eps:
        mid = 0.5 * (lo + hi)
        solves += 1
        r = check(mid)
        if r.feasible:
            lo, P_lo = mid, r.P
        else:
            hi = mid
    return ZfBisection(lo, P_lo, True, solves)


def sinr_upper_bound(sys: ZfSystem, e, f, P_d: float) -> float:
    """Interference-free bound: user k alone at the largest power every station allows."""
    head = np.maximum(P_d - f, 0.0)[:, None]
    with np.errstate(divide="ignore"):
        pmax = np.where(e > 0, head / e, np.inf).min(axis=0)
    return float(np.min(sys.gain * pmax / sys.n))


def _state(F, P, sigma) -> PrecoderState:
    return PrecoderState("zf", F, np.tile(P, (F.shape[0], 1)), np.asarray(sigma, float))


def fill_budget(F, P, sigma, setup: DownlinkSetup):
    """Scale (P, sigma^2) up by min_m P_d / P_dm when every station has headroom.

    Fronthaul rates depend on P / sigma^2 only, so they are unchanged, the
    busiest station lands exactly on its budget and every SINR grows.
    """
    pdm = np.array([transmit_power_pdm(F[m], P, sigma[m], setup.W[m], setup.rho_d)
                    for m in range(F.shape[0])])
    if not np.any(pdm > 0):
        return P, sigma
    kappa = setup.P_d / pdm.max()
    if kappa <= 1.0:
        return P, sigma
    return P * kappa, sigma * math.sqrt(kappa)


def algorithm2(eff: EffectiveChannel, setup: DownlinkSetup, init_sigma=None,
               rtol: float = AO_RTOL, max_rounds: int = AO_MAX_ROUNDS,
               fill: bool = True) -> FairnessResult:
    """Alternate the linear-system bisection over P with the codebook solve for sigma.

    Each bisection starts from the current min SINR, which stays feasible
    after the previous codebook step, so the trace cannot decrease.  With
    ``fill`` every round ends with the budget-filling joint scaling; without
    it the iteration stalls at the power scale of the starting point, since
    any balanced state with saturated fronthaul is a fixed point.
    """
    F = zf_precoder(eff)
    M, R, K = F.shape
    if init_sigma is None:
        powers, sigma = uniform_start(F, setup, shared=True)
        P, sigma = fill_budget(F, powers[0], sigma, setup)
    else:
        sigma = np.asarray(init_sigma, float).copy()
        P = np.zeros(K)
    e = power_coefficients(F, setup.W, setup.rho_d)
    state = _state(F, P, sigma)
    t_cur = sinr_per_user(state, eff, setup.rho_d, setup.sigma2_d, zf_fast=True).min_sinr
    trace, solves, status = [], 0, "max_rounds"
    for _ in range(max_rounds):
        sys = assemble_linear_system(eff, F, sigma, setup.rho_d, setup.sigma2_d)
        f = noise_power_offset(setup.W, sigma, setup.rho_d)
        if np.any(f > setup.P_d):
            status = "infeasible"
            break
        t_max = 2.0 * sinr_upper_bound(sys, e, f, setup.P_d)
        if not t_max > t_cur:
            t_max = 2.0 * t_cur + 1e-12

        def check(t, sys=sys):
            return zf_feasibility(t, sys, F, setup.W, sigma, setup.P_d, setup.C_d, setup.rho_d)

        seed = None
        if t_cur > 0:
            solves += 1
            r = check(t_cur)
            # the current P is feasible at t_cur; fall back to it if rounding rejects P(t_cur)
            seed = r.P if r.feasible else P
        res = bisection_power_zf(check, t_cur, t_max, 1e-4 * (1.0 + t_max), seed)
        solves += res.solves
        if res.P is not None:
            P = res.P
        sigma = np.array([solve_sigma_d(F[m], P, setup.C_d) for m in range(M)])
        if fill:
            P, sigma = fill_budget(F, P, sigma, setup)
        state = _state(F, P, sigma)
        t_new = sinr_per_user(state, eff, setup.rho_d, setup.sigma2_d, zf_fast=True).min_sinr
        trace.append(t_new)
        done = t_cur > 0 and abs(t_new - t_cur) <= rtol * abs(t_cur)
        t_cur = t_new
        if done:
            status = "converged"
            break
    return FairnessResult(t_cur, state, trace, status, len(trace), solves)
