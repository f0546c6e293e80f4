"""Rate-distortion fronthaul model: log-det capacity of Gaussian compression noise.

The codebook with i.i.d. compression noise of variance sigma^2 needs
log2 det(I + C / sigma^2) bits per use for an input of covariance C.  Both
directions invert this map: the noise level that spends exactly the capacity.
"""

from __future__ import annotations

import math

import numpy as np

LN2 = math.log(2.0)


def _eigs(C) -> np.ndarray:
    C = np.asarray(C)
    if C.ndim == 1:
        vals = np.asarray(C, float)
    else:
        vals = np.linalg.eigvalsh(0.5 * (C + np.conj(C.T)))
    return np.clip(vals, 0.0, None)


def capacity_bits(C, sigma2: float) -> float:
    """log2 det(I + C / sigma2); +inf when sigma2 == 0 and C != 0."""
    vals = _eigs(C)
    if not np.any(vals > 0):
        return 0.0
    if sigma2 <= 0:
        return math.inf
    return float(np.sum(np.log1p(vals / sigma2)) / LN2)


def _f(vals, v):
    # capacity at u = exp(v) and its derivative in v
    x = vals * math.exp(v)
    return float(np.sum(np.log1p(x))) / LN2, float(np.sum(x / (1.0 + x))) / LN2


def invert_capacity(C, target: float, rtol: float = 1e-12, max_iter: int = 200) -> float:
    """Noise variance sigma2 with log2 det(I + C/sigma2) = target.

    Safeguarded Newton on v = log(1/sigma2), where the capacity is convex and
    increasing, inside a bracket that is always maintained.  Returns 0 for an
    infinite target and also for C == 0, where every sigma2 meets the budget and
    the smallest one is preferred.
    """
    if target == math.inf:
        return 0.0
    if not target > 0:
        raise ValueError(f"capacity target must be positive, got {target!r}")
    vals = _eigs(C)
    vals = vals[vals > 0]
    if vals.size == 0:
        return 0.0
    lam_sum, lam_max = float(vals.sum()), float(vals.max())
    # f(u) <= u*sum(lam)/ln2 and f(u) >= log2(1 + lam_max*u)
    v_lo = math.log(target * LN2 / lam_sum)
    a = target * LN2
    v_hi = (a if a > 700 else math.log(math.expm1(a))) - math.log(lam_max)
    v = 0.5 * (v_lo + v_hi)
    for _ in range(max_iter):
        f, df = _f(vals, v)
        g = f - target
        if abs(g) <= rtol * target:
            break
        if g > 0:
            v_hi = v
        else:
            v_lo = v
        step = v - g / df if df > 0 else 0.5 * (v_lo + v_hi)
        v = step if v_lo < step < v_hi else 0.5 * (v_lo + v_hi)
    else:
        raise RuntimeError("capacity inversion did not converge")
    return math.exp(-v)
