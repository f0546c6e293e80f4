"""Max-min fair power control with MRT precoding.

Powers are found by bisection over a second-order cone feasibility problem
in x = sqrt(p); the codebook noise is then re-solved and the state is scaled
back into the power budget.  The two steps alternate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .downlink import (DownlinkSetup, PrecoderState, mrt_precoder, noise_power_offset,
                       power_coefficients, project_power, sinr_per_user, solve_sigma_d,
                       uniform_start)
from .uplink import EffectiveChannel

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
AO_RTOL = 1e-3
AO_MAX_ROUNDS = 50
MAX_DOUBLINGS = 30
KKT_SOLVER = "chol"

FEASIBLE, INFEASIBLE, INDETERMINATE = "feasible", "infeasible", "indeterminate"


@dataclass
class MrtCoefficients:
    a: np.ndarray  # (M, K)
    b: np.ndarray  # (M, K, K) complex, b[m, i, k]
    c: np.ndarray  # (M, K, K), c[m, i, k]
    d: np.ndarray  # (K,)
    e: np.ndarray  # (M, K)
    f: np.ndarray  # (M,)

    def sinr(self, x, sigma2_d: float) -> np.ndarray:
        """Per-user SINR at amplitudes x = sqrt(p), shape (M, K)."""
        x = np.asarray(x, float)
        num = np.einsum("mk,mk->k", self.a, x) ** 2
        quad = np.einsum("mik,mi->k", self.c, x ** 2)
        coh = np.abs(np.einsum("mik,mi->ik", self.b, x)) ** 2
        np.fill_diagonal(coh, 0.0)
        return num / (quad + coh.sum(axis=0) + self.d + sigma2_d)


def mrt_coefficients(eff: EffectiveChannel, sigma_d, rho_d: float, W) -> MrtCoefficients:
    g, Cg = eff.g_hat, eff.C_gtilde
    one = 1.0 - rho_d
    a = one * np.sum(np.abs(g) ** 2, axis=-1)
    b = one * np.einsum("mkr,mir->mik", np.conj(g), g)
    A_diag = np.abs(g) ** 2 + np.real(np.diagonal(Cg, axis1=-2, axis2=-1))  # (M, K, R)
    c = (one ** 2 * np.real(np.einsum("mir,mkrs,mis->mik", np.conj(g), Cg, g))
         + rho_d * one * np.einsum("mkr,mir->mik", A_diag, np.abs(g) ** 2))
    sig2 = np.asarray(sigma_d, float) ** 2
    d = one * np.einsum("mk,m->k", A_diag.sum(axis=-1), sig2)
    F = np.swapaxes(g, 1, 2)
    e = power_coefficients(F, W, rho_d)
    f = noise_power_offset(W, sigma_d, rho_d)
    return MrtCoefficients(a, b, np.maximum(c, 0.0), d, e, f)


@dataclass
class SocpWitness:
    x: np.ndarray  # (M, K) amplitudes, p = x**2
    y: np.ndarray  # (K, K), y[i, k] for i != k, zero diagonal
    status: str
    slack: float  # optimal phase-I slack (noise-normalized)
    violation: float  # largest constraint violation at zero slack (noise-normalized)
    t: float

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE

    @property
    def powers(self) -> np.ndarray:
        return self.x ** 2


def constraint_violation(t: float, coef: MrtCoefficients, sigma2_d: float, P_d: float, x, y=None) -> float:
    """Largest violation of the cone constraints at level t.

    User cones are measured in units of the noise standard deviation and the
    power cones in units of sqrt(P_d).  ``y`` defaults to the tight value
    |sum_m b x|.
    """
    x = np.asarray(x, float)
    sig = math.sqrt(sigma2_d)
    inter = np.abs(np.einsum("mik,mi->ik", coef.b, x))
    if y is None:
        y = inter
    y = np.array(y, float, copy=True)
    np.fill_diagonal(y, 0.0)
    viol = [float(np.max(-x))] if x.size else []
    K = coef.a.shape[1]
    for k in range(K):
        lhs = math.sqrt(float(np.sum(coef.c[:, :, k] * x ** 2)) + float(np.sum(y[:, k] ** 2))
                        + coef.d[k] + sigma2_d)
        rhs = float(coef.a[:, k] @ x[:, k]) / math.sqrt(t) if t > 0 else math.inf
        viol.append((lhs - rhs) / sig)
    off = ~np.eye(K, dtype=bool)
    if K > 1:
        viol.append(float(np.max((inter - y)[off])) / sig)
    for m in range(coef.e.shape[0]):
        if P_d < coef.f[m]:
            viol.append(math.inf)
            continue
        lhs = math.sqrt(float(coef.e[m] @ x[m] ** 2))
        viol.append((lhs - math.sqrt(P_d - coef.f[m])) / math.sqrt(P_d))
    return max(viol)


def _solve_cvxopt(c, G, h, dims, options):
    from cvxopt import matrix, solvers
    opts = {"show_progress": False, "abstol": 1e-8, "reltol": 1e-8, "feastol": 1e-8,
            "maxiters": 200}
    opts.update(options or {})
    kkt = opts.pop("kktsolver", KKT_SOLVER)
    args = (matrix(c), matrix(G), matrix(h), dims)
    try:
        sol = solvers.conelp(*args, options=opts, kktsolver=kkt)
    except (ArithmeticError, ValueError):
        # the scaling update can hit sqrt(<0) near the optimum; looser stopping avoids it
        opts.update(abstol=1e-7, reltol=1e-7, feastol=1e-7)
        sol = solvers.conelp(*args, options=opts, kktsolver=kkt)
    z = np.array(sol["x"]).ravel() if sol["x"] is not None else None
    return sol["status"], z


def _solve_cvxpy(c, G, h, dims, options):
    import cvxpy as cp
    z = cp.Variable(len(c))
    cons = []
    r = dims["l"]
    if r:
        cons.append(G[:r] @ z <= h[:r])
    for q in dims["q"]:
        Gq, hq = G[r:r + q], h[r:r + q]
        cons.append(cp.SOC(hq[0] - Gq[0] @ z, hq[1:] - Gq[1:] @ z))
        r += q
    prob = cp.Problem(cp.Minimize(c @ z), cons)
    prob.solve(solver=(options or {}).get("solver", "CLARABEL"))
    status = "optimal" if prob.status == cp.OPTIMAL else "unknown"
    return status, None if z.value is None else np.asarray(z.value)


BACKENDS = {"cvxopt": _solve_cvxopt, "cvxpy": _solve_cvxpy}


def socp_feasibility(t: float, coef: MrtCoefficients, sigma2_d: float, P_d: float,
                     backend: str = "cvxopt", options: dict | None = None) -> SocpWitness:
    """Phase-I test of the cone program at SINR level t.

    Minimizes one slack s added to the right-hand side of every cone.  The
    level is FEASIBLE when the recovered witness meets all constraints within
    FEAS_TOL with s = 0.  Amplitudes are rescaled by sqrt(P_d / e) and cones
    are normalized by the noise level so the solver sees O(1) data.
    """
    M, K = coef.a.shape
    zero = SocpWitness(np.zeros((M, K)), np.zeros((K, K)), INFEASIBLE, math.inf, math.inf, t)
    if np.any(P_d < coef.f):
        return zero
    if t <= 0:
        zero.status, zero.slack, zero.violation = FEASIBLE, 0.0, 0.0
        return zero
    sig = math.sqrt(sigma2_d)
    active = np.argwhere(coef.e > 0)  # inactive amplitudes cannot radiate and are fixed at 0
    nx = len(active)
    col = {(int(m), int(k)): j for j, (m, k) in enumerate(active)}
    alpha = np.zeros((M, K))
    alpha[coef.e > 0] = np.sqrt(P_d / coef.e[coef.e > 0])
    n = nx + 1
    s_col = nx
    G_rows, h = [], []

    def row(entries=(), h0=0.0):
        r = np.zeros(n)
        for j, v in entries:
            r[j] += v
        G_rows.append(r)
        h.append(h0)

    for j in range(nx):
        row([(j, -1.0)])
    row([(s_col, -1.0)], 1.0)  # s >= -1 keeps the program bounded
    q_dims = []
    inv = 1.0 / (sig * math.sqrt(t))
    for k in range(K):
        row([(col[m, k], -coef.a[m, k] * alpha[m, k] * inv) for m in range(M) if (m, k) in col]
            + [(s_col, -1.0)])
        for (m, i), j in col.items():
            row([(j, -math.sqrt(coef.c[m, i, k]) * alpha[m, i] / sig)])
        # y_ik = |sum_m b x| enters only squared, so its real and imaginary
        # parts sit directly in the user cone
        for i in range(K):
            if i == k:
                continue
            terms = [(col[m, i], coef.b[m, i, k] * alpha[m, i] / sig) for m in range(M) if (m, i) in col]
            row([(j, -v.real) for j, v in terms])
            row([(j, -v.imag) for j, v in terms])
        row((), math.sqrt(1.0 + coef.d[k] / sigma2_d))
        q_dims.append(1 + nx + 2 * (K - 1) + 1)
    for m in range(M):
        row([(s_col, -1.0)], math.sqrt((P_d - coef.f[m]) / P_d))
        for k in range(K):
            if (m, k) in col:
                row([(col[m, k], -1.0)])
        q_dims.append(1 + sum((m, k) in col for k in range(K)))
    G = np.array(G_rows)
    cvec = np.zeros(n)
    cvec[s_col] = 1.0
    dims = {"l": nx + 1, "q": q_dims, "s": []}
    try:
        status, z = BACKENDS[backend](cvec, G, np.array(h), dims, options)
    except (ArithmeticError, ValueError) as exc:
        log.warning("cone solver failed at t=%g: %s", t, exc)
        status, z = "error", None
    if z is None:
        zero.status = INDETERMINATE
        return zero
    x = np.zeros((M, K))
    for (m, k), j in col.items():
        x[m, k] = alpha[m, k] * max(z[j], 0.0)
    y = np.abs(np.einsum("mik,mi->ik", coef.b, x))
    np.fill_diagonal(y, 0.0)
    slack = float(z[s_col])
    viol = constraint_violation(t, coef, sigma2_d, P_d, x, y)
    if viol <= FEAS_TOL:
        verdict = FEASIBLE
    elif status == "optimal" and slack > FEAS_TOL:
        verdict = INFEASIBLE
    else:
        verdict = INDETERMINATE
        log.info("cone solver indeterminate at t=%g (status %s, slack %g, violation %g)",
                 t, status, slack, viol)
    return SocpWitness(x, y, verdict, slack, viol, t)


@dataclass
class BisectionResult:
    t: float
    witness: SocpWitness
    status: str
    solves: int


def bisection_power(coef: MrtCoefficients, sigma2_d: float, P_d: float, t_min: float,
                    t_max: float, eps: float, backend: str = "cvxopt",
                    witness: SocpWitness | None = None) -> BisectionResult:
    """Largest feasible SINR level in [t_min, t_max] to within eps.

    If t_max turns out feasible the bracket is doubled (at most 30 times).
    ``witness`` may carry a known feasible point at t_min.
    """
    if not (t_max > t_min >= 0 and eps > 0):
        raise ValueError("need t_max > t_min >= 0 and eps > 0")
    solves = 0

    def test(t):
        nonlocal solves
        solves += 1
        return socp_feasibility(t, coef, sigma2_d, P_d, backend)

    lo = witness if witness is not None and witness.feasible else test(t_min)
    if not lo.feasible:
        return BisectionResult(t_min, lo, INFEASIBLE, solves)
    hi = test(t_max)
    for _ in range(MAX_DOUBLINGS):
        if not hi.feasible:
            break
        t_min, lo = t_max, hi
        t_max *= 2.0
        hi = test(t_max)
    while t_max - t_min > eps:
        mid = 0.5 * (t_min + t_max)
        w = test(mid)
        if w.feasible:
            t_min, lo = mid, w
        else:
            t_max = mid
    return BisectionResult(t_min, lo, FEASIBLE, solves)


def sinr_upper_bound(coef: MrtCoefficients, sigma2_d: float, P_d: float) -> float:
    """Interference-free bound on the max-min SINR: every station gives user k all it can."""
    head = np.maximum(P_d - coef.f, 0.0)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        xmax = np.where(coef.e > 0, np.sqrt(head / coef.e), 0.0)
    per_user = np.einsum("mk,mk->k", coef.a, xmax) ** 2 / (coef.d + sigma2_d)
    return float(per_user.min())


@dataclass
class FairnessResult:
    t_star: float
    state: PrecoderState
    trace: list = field(default_factory=list)  # post-update min SINR per AO round
    status: str = "converged"
    rounds: int = 0
    solves: int = 0

    @property
    def powers(self) -> np.ndarray:
        return self.state.powers

    @property
    def sigma_d(self) -> np.ndarray:
        return self.state.sigma_d


def min_sinr(state: PrecoderState, eff: EffectiveChannel, setup: DownlinkSetup) -> float:
    return sinr_per_user(state, eff, setup.rho_d, setup.sigma2_d).min_sinr


def algorithm1(eff: EffectiveChannel, setup: DownlinkSetup, init_sigma=None,
               rtol: float = AO_RTOL, max_rounds: int = AO_MAX_ROUNDS,
               backend: str = "cvxopt") -> FairnessResult:
    """Alternate power bisection, codebook solve and budget projection.

    Returns the iterate with the highest re-evaluated min SINR; the trace can
    be non-monotone.
    """
    F = mrt_precoder(eff)
    M, R, K = F.shape
    if init_sigma is None:
        powers, sigma = uniform_start(F, setup)
    else:
        sigma = np.asarray(init_sigma, float).copy()
        powers = np.zeros((M, K))
    best = PrecoderState("mrt", F, powers, sigma)
    best_t = min_sinr(best, eff, setup) if powers.any() else 0.0
    trace, solves, status = [], 0, "max_rounds"
    prev = None
    for _ in range(max_rounds):
        coef = mrt_coefficients(eff, sigma, setup.rho_d, setup.W)
        if np.any(coef.f > setup.P_d):
            status = "infeasible"
            break
        t_max = sinr_upper_bound(coef, setup.sigma2_d, setup.P_d)
        if not t_max > 0:
            status = "infeasible"
            break
        res = bisection_power(coef, setup.sigma2_d, setup.P_d, 0.0, t_max,
                              1e-4 * (1.0 + t_max), backend)
        solves += res.solves
        powers = res.witness.powers
        sigma = np.array([solve_sigma_d(F[m], powers[m], setup.C_d) for m in range(M)])
        powers, sigma = project_power(F, powers, sigma, setup)
        state = PrecoderState("mrt", F, powers, sigma)
        t = min_sinr(state, eff, setup)
        trace.append(t)
        if t > best_t:
            best, best_t = state, t
        if prev is not None and t < prev:
            log.debug("MRT trace decreased from %g to %g", prev, t)
        if prev is not None and abs(t - prev) <= rtol * abs(prev):
            status = "converged"
            break
        prev = t
    return FairnessResult(best_t, best, trace, status, len(trace), solves)
