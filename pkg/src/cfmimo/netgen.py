"""Network topology, multipath parameters, covariances and channel draws."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig

# stage tags for derived random streams
STAGE_TOPOLOGY = 1
STAGE_PATHS = 2
STAGE_CHANNEL = 3
STAGE_NOISE = 4


def child_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, *keys).

    The same key tuple always yields the same stream, independently of how many
    other streams were drawn before it, so any cell of a sweep can be recomputed
    in isolation.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class Topology:
    stations: np.ndarray  # (M, 2)
    users: np.ndarray  # (K, 2)
    area_side: float
    distance: np.ndarray  # (M, K) toroidal distances


@dataclass
class PathSet:
    """Per-link multipath parameters, zero-padded to the largest path count.

    Arrays have shape (M, K, L_max); padded slots carry zero power so every
    sum over paths can run over the full last axis.
    """

    n_paths: np.ndarray  # (M, K) int
    power: np.ndarray  # sigma2 per path, linear
    theta: np.ndarray  # azimuth AoA in [-pi, pi]
    phi: np.ndarray  # zenith ZoA in [0, pi]
    rows: int
    cols: int

    @property
    def N(self) -> int:
        return self.rows * self.cols


@dataclass
class ChannelStats:
    cov: np.ndarray  # (M, K, N, N)

    def station_cov(self, m: int) -> np.ndarray:
        """Block-diagonal NK x NK covariance of the stacked channel of station m."""
        K, N = self.cov.shape[1], self.cov.shape[2]
        out = np.zeros((K * N, K * N), dtype=complex)
        for k in range(K):
            out[k * N:(k + 1) * N, k * N:(k + 1) * N] = self.cov[m, k]
        return out


@dataclass
class ChannelDraw:
    h: np.ndarray  # (M, K, N)
    alpha: np.ndarray  # (M, K, L_max)


def toroidal_distance(a: np.ndarray, b: np.ndarray, side: float) -> np.ndarray:
    """Pairwise wrap-around distance between point sets a (P, 2) and b (Q, 2)."""
    delta = np.abs(np.asarray(a, float)[:, None, :] - np.asarray(b, float)[None, :, :])
    delta = np.minimum(delta, side - delta)
    return np.sqrt(np.sum(delta ** 2, axis=-1))


def drop_topology(cfg: SystemConfig, rng: np.random.Generator) -> Topology:
    stations = rng.uniform(0.0, cfg.area_side, size=(cfg.M, 2))
    users = rng.uniform(0.0, cfg.area_side, size=(cfg.K, 2))
    return Topology(stations, users, cfg.area_side,
                    toroidal_distance(stations, users, cfg.area_side))


def pathloss_gain(d, cfg: SystemConfig):
    """Linear log-distance gain; distances below d0 are clamped to d0."""
    d = np.maximum(np.asarray(d, float), cfg.d0)
    pl_db = cfg.pl0_db + 10.0 * cfg.pl_exponent * np.log10(d / cfg.d0)
    return 10.0 ** (-pl_db / 10.0)


def sample_paths(cfg: SystemConfig, topology: Topology, rng: np.random.Generator) -> PathSet:
    M, K = topology.distance.shape
    L = rng.integers(cfg.L_min, cfg.L_max + 1, size=(M, K))
    Lmax = int(cfg.L_max)
    theta = rng.uniform(-np.pi, np.pi, size=(M, K, Lmax))
    phi = rng.uniform(0.0, np.pi, size=(M, K, Lmax))
    idx = np.arange(Lmax)
    active = idx[None, None, :] < L[:, :, None]
    profile = np.where(active, np.exp(-cfg.path_decay * idx)[None, None, :], 0.0)
    profile /= profile.sum(axis=-1, keepdims=True)
    power = profile * pathloss_gain(topology.distance, cfg)[:, :, None]
    theta = np.where(active, theta, 0.0)
    phi = np.where(active, phi, np.pi / 2)
    return PathSet(L, power, theta, phi, cfg.N_rows, cfg.N_cols)


def array_response(theta, phi, rows: int, cols: int) -> np.ndarray:
    """Half-wavelength UPA response, row-major, phase reference at element (0, 0).

    Broadcasts over the shapes of ``theta`` and ``phi``; the element axis is last.
    """
    theta = np.asarray(theta, float)[..., None]
    phi = np.asarray(phi, float)[..., None]
    r = np.repeat(np.arange(rows), cols)
    c = np.tile(np.arange(cols), rows)
    return np.exp(1j * np.pi * (r * np.sin(phi) * np.sin(theta) + c * np.cos(phi)))


def clamp_psd(C: np.ndarray) -> np.ndarray:
    """Re-symmetrize and clamp negative eigenvalues (batched over leading axes)."""
    C = 0.5 * (C + np.conj(np.swapaxes(C, -1, -2)))
    vals, vecs = np.linalg.eigh(C)
    if np.all(vals >= 0):
        return C
    vals = np.maximum(vals, 0.0)
    C = (vecs * vals[..., None, :]) @ np.conj(np.swapaxes(vecs, -1, -2))
    return 0.5 * (C + np.conj(np.swapaxes(C, -1, -2)))


def channel_covariance(paths: PathSet) -> ChannelStats:
    a = array_response(paths.theta, paths.phi, paths.rows, paths.cols)  # (M, K, L, N)
    cov = np.einsum("mkl,mkli,mklj->mkij", paths.power, a, np.conj(a))
    return ChannelStats(clamp_psd(cov))


def sample_channel(paths: PathSet, rng: np.random.Generator) -> ChannelDraw:
    shape = paths.power.shape
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    alpha = np.sqrt(paths.power) * z
    return ChannelDraw(reconstruct_channel(alpha, paths), alpha)


def reconstruct_channel(alpha: np.ndarray, paths: PathSet) -> np.ndarray:
    a = array_response(paths.theta, paths.phi, paths.rows, paths.cols)
    return np.einsum("mkl,mkli->mki", alpha, a)
