"""Quantizer model (AQNM and the Lloyd-Max quantizer) and statistical RF combiners."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import erfinv, ndtr

from .netgen import ChannelStats, Topology

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
EXACT_MAX_BITS = 5


class ConvergenceError(RuntimeError):
    pass


def _pdf(x):
    with np.errstate(over="ignore", invalid="ignore"):
        out = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return np.where(np.isinf(x), 0.0, out)


@dataclass(frozen=True)
class Codebook:
    points: np.ndarray
    thresholds: np.ndarray
    mse: float  # normalized MSE on a unit-variance Gaussian
    iterations: int


def _cells(points):
    thresholds = 0.5 * (points[1:] + points[:-1])
    edges = np.concatenate(([-np.inf], thresholds, [np.inf]))
    return thresholds, edges


def _cell_mass(edges):
    a, b = edges[:-1], edges[1:]
    # survival-function form in the upper half avoids cancellation near 1
    return np.where(a > 0, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))


def _centroids(points):
    _, edges = _cells(points)
    pdf = _pdf(edges)
    mass = _cell_mass(edges)
    return (pdf[:-1] - pdf[1:]) / mass, edges, pdf, mass


@functools.lru_cache(maxsize=None)
def lloyd_max_codebook(B: int, tol: float = 1e-12, max_iter: int = 10_000) -> Codebook:
    """MMSE scalar quantizer with 2**B levels for a standard normal input.

    Lloyd iteration (points -> cell centroids, thresholds -> midpoints) warm
    started from the Panter-Dite point density, then Newton steps on the
    centroid fixed-point equations, whose Jacobian is tridiagonal.  Plain Lloyd
    iteration converges too slowly above ~6 bits to meet ``tol``.
    """
    if int(B) != B or not 1 <= B <= 12:
        raise ValueError(f"codebook resolution must be an integer in [1, 12], got {B!r}")
    n = 2 ** int(B)
    u = (np.arange(n) + 0.5) / n
    points = math.sqrt(3.0) * np.sqrt(2.0) * erfinv(2.0 * u - 1.0)
    it = 0
    for it in range(1, max_iter + 1):
        cent, edges, pdf, mass = _centroids(points)
        step = cent - points
        if n > 2 and it > 10:
            # Newton on F(p) = c(p) - p
            a, b = edges[:-1], edges[1:]
            dc_da = np.where(np.isinf(a), 0.0, pdf[:-1] * (cent - np.where(np.isinf(a), 0, a)) / mass)
            dc_db = np.where(np.isinf(b), 0.0, pdf[1:] * (np.where(np.isinf(b), 0, b) - cent) / mass)
            # a_i = (p_{i-1}+p_i)/2, b_i = (p_i+p_{i+1})/2
            diag = 0.5 * (dc_da + dc_db) - 1.0
            upper = 0.5 * dc_db[:-1]  # d c_i / d p_{i+1}
            lower = 0.5 * dc_da[1:]  # d c_i / d p_{i-1}
            ab = np.zeros((3, n))
            ab[0, 1:] = upper
            ab[1] = diag
            ab[2, :-1] = lower
            newton = solve_banded((1, 1), ab, -step)
            trial = points + newton
            if np.all(np.diff(trial) > 0):
                t_cent = _centroids(trial)[0]
                if np.max(np.abs(t_cent - trial)) < np.max(np.abs(step)):
                    step = newton
        points = points + step
        if np.max(np.abs(step)) < tol:
            break
    else:
        raise ConvergenceError(f"Lloyd-Max iteration did not converge for B={B}")
    points = 0.5 * (points - points[::-1])  # exact antisymmetry
    thresholds, edges = _cells(points)
    mass = _cell_mass(edges)
    mse = 1.0 - float(np.sum(mass * points ** 2))
    return Codebook(points, thresholds, mse, it)


def distortion_factor(B) -> float:
    """Normalized MSE of the B-bit Gaussian MMSE quantizer.

    Exact (Lloyd-Max) for B <= 5, high-resolution approximation
    (pi*sqrt(3)/2) * 2**(-2B) from 6 bits on, zero for infinite resolution.
    """
    if B == math.inf:
        return 0.0
    if B < 1 or int(B) != B:
        raise ValueError(f"resolution must be a positive integer or inf, got {B!r}")
    if B <= EXACT_MAX_BITS:
        return lloyd_max_codebook(int(B)).mse
    return math.pi * math.sqrt(3.0) / 2.0 * 2.0 ** (-2.0 * B)


@dataclass(frozen=True)
class QuantizerModel:
    B: float
    rho: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "rho", distortion_factor(self.B))

    @property
    def codebook(self) -> Codebook:
        if self.B == math.inf:
            raise ValueError("an infinite-resolution quantizer has no codebook")
        return lloyd_max_codebook(int(self.B))


def _quantize_real(x, codebook: Codebook):
    idx = np.searchsorted(codebook.thresholds, x)
    return codebook.points[idx]


def quantize_signal(x, model: QuantizerModel, scale) -> np.ndarray:
    """Quantize real and imaginary parts with the variance-matched codebook.

    ``scale`` is the standard deviation of each complex component
    (E|x_i|^2 = scale_i^2), so every real dimension has std scale/sqrt(2).
    """
    x = np.asarray(x, complex)
    s = np.broadcast_to(np.asarray(scale, float), x.shape[-1:]) / math.sqrt(2.0)
    if np.any(s <= 0):
        raise ValueError("quantizer scale must be positive")
    cb = model.codebook
    re = _quantize_real(x.real / s, cb) * s
    im = _quantize_real(x.imag / s, cb) * s
    return re + 1j * im


def aqnm_noise_cov(C_in, rho: float) -> np.ndarray:
    """Quantization-noise covariance rho*(1-rho)*diag(C_in)."""
    C_in = np.asarray(C_in)
    return rho * (1.0 - rho) * np.diag(np.real(np.diagonal(C_in))).astype(complex)


@dataclass
class CombinerSet:
    W: np.ndarray  # (M, N, R) unit-modulus
    semi_unitary: np.ndarray  # (M, N, R) eigenvector matrices before projection
    iterations: np.ndarray  # (M,) alternating-projection rounds


def _phase(U):
    mag = np.abs(U)
    out = np.ones_like(U, dtype=complex)
    nz = mag >= 1e-14
    out[nz] = U[nz] / mag[nz]
    return out


def _polar(W):
    u, _, vh = np.linalg.svd(W, full_matrices=False)
    return u @ vh


def alternating_projection(U, tol: float = 1e-8, max_iter: int = 100, return_trace: bool = False):
    """Project a semi-unitary N x R matrix onto the unit-modulus set.

    Alternates the entrywise phase projection with the polar (nearest
    semi-unitary) projection; the last phase projection is returned so the
    output is always unit-modulus.
    """
    U = np.asarray(U, complex)
    W = _phase(U)
    steps = []
    for _ in range(max_iter):
        W_next = _phase(_polar(W))
        delta = float(np.linalg.norm(W_next - W))
        steps.append(delta)
        W = W_next
        if delta < tol:
            break
    if return_trace:
        return W, steps
    return W


def top_eigenvectors(C, R: int) -> np.ndarray:
    vals, vecs = np.linalg.eigh(C)
    order = np.lexsort((np.arange(len(vals)), -vals))  # descending, ties by index
    return vecs[:, order[:R]]


def nearest_users(topology: Topology, m: int, count: int) -> np.ndarray:
    return np.argsort(topology.distance[m], kind="stable")[:count]


def design_combiners(stats: ChannelStats, topology: Topology, cfg) -> CombinerSet:
    M, K, N, _ = stats.cov.shape
    if K % M:
        raise ValueError(f"M={M} must divide K={K}")
    per = K // M
    W = np.empty((M, N, cfg.R), complex)
    U = np.empty_like(W)
    iters = np.zeros(M, int)
    for m in range(M):
        users = nearest_users(topology, m, per)
        C = stats.cov[m, users].sum(axis=0)
        # normalize so the eigensolver sees O(1) entries
        scale = np.real(np.trace(C)) or 1.0
        U[m] = top_eigenvectors(C / scale, cfg.R)
        W[m], steps = alternating_projection(U[m], return_trace=True)
        iters[m] = len(steps)
    return CombinerSet(W, U, iters)


@dataclass
class AqnmCheck:
    B: int
    rho: float  # model distortion factor
    rho_empirical: float  # mean of E|q_i|^2 / ((1-rho) C_ii)
    cov_rel_err: float  # worst diagonal entry of the sample noise covariance vs rho(1-rho)C_ii
    offdiag: float  # largest |sample noise cross-covariance| relative to rho(1-rho)sqrt(C_ii C_jj)
    corr: float  # largest |input-noise sample correlation|


def validate_aqnm(B: int, C, n_samples: int, rng: np.random.Generator, chunk: int = 200_000) -> AqnmCheck:
    """Quantize correlated complex Gaussian samples and compare with the additive model.

    The noise is q = Q(x) - (1-rho) x with rho the codebook distortion.  Cross
    covariances of q are reported but have no model counterpart: the model
    only fixes the diagonal.
    """
    C = np.asarray(C, complex)
    d = C.shape[0]
    L = np.linalg.cholesky(C)
    model = QuantizerModel(B)
    rho = model.rho
    scale = np.sqrt(np.real(np.diag(C)))
    qq = np.zeros((d, d), complex)
    xq = np.zeros((d, d), complex)
    xx = np.zeros(d)
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        z = (rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))) / math.sqrt(2.0)
        x = z @ L.T
        q = quantize_signal(x, model, scale) - (1.0 - rho) * x
        qq += q.T @ np.conj(q)
        xq += x.T @ np.conj(q)
        xx += np.sum(np.abs(x) ** 2, axis=0)
        done += n
    qq /= n_samples
    xq /= n_samples
    xx /= n_samples
    target = rho * (1.0 - rho) * np.real(np.diag(C))
    q_diag = np.real(np.diag(qq))
    norm = np.sqrt(np.outer(target, target))
    off = np.abs(qq) / norm
    np.fill_diagonal(off, 0.0)
    corr = np.abs(xq) / np.sqrt(np.outer(xx, q_diag))
    return AqnmCheck(int(B), rho, float(np.mean(q_diag / ((1.0 - rho) * np.real(np.diag(C))))),
                     float(np.max(np.abs(q_diag / target - 1.0))), float(off.max()), float(corr.max()))
