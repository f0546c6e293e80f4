"""Seeded Monte Carlo orchestration, experiment sweeps and CSV output.

Every random quantity comes from a counter-based stream keyed by
(master seed, drop, block, stage), so a single cell of any sweep can be
recomputed in isolation and the output does not depend on the number of
worker processes.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import downlink, energy, maxmin_mrt, maxmin_zf, netgen, rf, uplink
from .config import ExperimentSpec, PowerParams, SystemConfig, config_hash

log = logging.getLogger(__name__)

HEADER = ("drop", "block", "C", "B", "precoder", "metric", "value", "status", "iters", "config_hash")
METRICS = ("nmse", "min_sinr", "min_rate", "ee", "p_bs_total",
           "aqnm_rho", "aqnm_cov_rel_err", "aqnm_offdiag", "aqnm_corr")
PRECODER_ORDER = {"none": 0, "mrt": 1, "zf": 2}

# correlated test covariance for the AQNM validation experiment
AQNM_COV = np.array([[1.0, 0.5, 0.2j, 0.0],
                     [0.5, 2.0, 0.3, 0.1],
                     [-0.2j, 0.3, 0.5, 0.0],
                     [0.0, 0.1, 0.0, 1.5]])


class StageError(RuntimeError):
    """A pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


@dataclass(frozen=True)
class ResultRow:
    drop: int
    block: int
    C: float
    B: float
    precoder: str
    metric: str
    value: float
    status: str = "ok"
    iters: int = 0
    grid: int = 0  # position in the sweep grid; orders rows, not written

    def sort_key(self):
        return (self.drop, self.block, self.grid, PRECODER_ORDER.get(self.precoder, 9),
                METRICS.index(self.metric))


@dataclass
class DropState:
    drop: int
    topology: netgen.Topology
    paths: netgen.PathSet
    stats: netgen.ChannelStats
    combiners: rf.CombinerSet


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage label
        raise StageError(name, exc) from exc


def prepare_drop(cfg: SystemConfig, seed: int, drop: int) -> DropState:
    """Topology, paths, covariances and combiners; shared by every block and grid point."""
    topo = _stage("netgen", netgen.drop_topology, cfg, netgen.child_rng(seed, drop, 0, netgen.STAGE_TOPOLOGY))
    paths = _stage("netgen", netgen.sample_paths, cfg, topo, netgen.child_rng(seed, drop, 0, netgen.STAGE_PATHS))
    stats = _stage("netgen", netgen.channel_covariance, paths)
    comb = _stage("rf", rf.design_combiners, stats, topo, cfg)
    return DropState(drop, topo, paths, stats, comb)


def drop_nmse(state: DropState, cfg: SystemConfig) -> float:
    X = uplink.training_matrix(cfg.T, cfg.K, cfg.P_u)
    est = _stage("uplink", uplink.estimate_uplink, state.stats, state.combiners.W, X, cfg.sigma2_u,
                 rf.distortion_factor(cfg.B_u), cfg.C_u)
    return uplink.nmse(state.stats, est)


@dataclass
class BlockOutcome:
    precoder: str
    min_sinr: float
    min_rate: float
    tx_power: np.ndarray  # (M,) analytic expected radiated power per station
    status: str
    iters: int


def estimate_block(state: DropState, cfg: SystemConfig, seed: int, block: int,
                   perfect_csi: bool = False) -> uplink.EffectiveChannel:
    draw = netgen.sample_channel(state.paths, netgen.child_rng(seed, state.drop, block, netgen.STAGE_CHANNEL))
    X = uplink.training_matrix(cfg.T, cfg.K, cfg.P_u)
    est = _stage("uplink", uplink.estimate_uplink, state.stats, state.combiners.W, X, cfg.sigma2_u,
                 rf.distortion_factor(cfg.B_u), cfg.C_u, draw,
                 netgen.child_rng(seed, state.drop, block, netgen.STAGE_NOISE))
    if perfect_csi:
        est = dataclasses.replace(est, h_hat=draw.h, C_htilde=np.zeros_like(est.C_htilde))
    return uplink.effective_channel(est, state.combiners.W)


def run_coherence_block(state: DropState, cfg: SystemConfig, seed: int, block: int,
                        precoders=("mrt", "zf"), perfect_csi: bool = False) -> list[BlockOutcome]:
    """One block: channel draw, estimation, then each precoder's max-min optimization.

    All precoders see the same channel draw and the same estimate.
    """
    eff = estimate_block(state, cfg, seed, block, perfect_csi)
    setup = downlink.DownlinkSetup.from_config(cfg, state.combiners.W)
    out = []
    for kind in precoders:
        if kind == "mrt":
            res = _stage("maxmin_mrt", maxmin_mrt.algorithm1, eff, setup)
        else:
            try:
                res = maxmin_zf.algorithm2(eff, setup)
            except downlink.RankDeficientError as exc:
                log.warning("drop %d block %d: %s", state.drop, block, exc)
                out.append(BlockOutcome(kind, math.nan, math.nan, np.full(cfg.M, math.nan), "rank-deficient", 0))
                continue
            except Exception as exc:  # noqa: BLE001
                raise StageError("maxmin_zf", exc) from exc
        report = downlink.sinr_per_user(res.state, eff, setup.rho_d, setup.sigma2_d)
        tx = downlink.station_powers(res.state, setup.W, setup.rho_d)
        out.append(BlockOutcome(kind, report.min_sinr, float(report.rate.min()), tx, res.status, res.rounds))
    return out


def total_bs_power(power: PowerParams, cfg: SystemConfig, tx_power) -> float:
    """Sum over stations of the consumed base-station power for given radiated powers."""
    pa = energy.pa_power(power, cfg, np.asarray(tx_power, float))
    return float(np.sum(energy.bs_power(power, cfg, pa)))


def _grid(spec: ExperimentSpec):
    return [(C, B) for C in spec.C_grid for B in spec.B_grid]


def _drop_rows(job) -> list[ResultRow]:
    """All rows that depend on one drop (runs in a worker process)."""
    cfg, power, spec, drop = job
    seed = spec.seed
    state = prepare_drop(cfg, seed, drop)
    rows = []
    for g, (C, B) in enumerate(_grid(spec)):
        c = cfg.with_resolution_capacity(B, C)
        if spec.kind == "nmse-sweep":
            rows.append(ResultRow(drop, 0, C, B, "none", "nmse", drop_nmse(state, c), grid=g))
            continue
        for block in range(spec.n_blocks):
            outcomes = []
            # one precoder at a time so a failure stays confined to its own rows;
            # the keyed streams give every precoder the same draw
            for p in spec.precoders:
                try:
                    outcomes += run_coherence_block(state, c, seed, block, (p,))
                except StageError as exc:
                    log.warning("drop %d block %d %s: %s", drop, block, p, exc)
                    outcomes.append(BlockOutcome(p, math.nan, math.nan, np.full(c.M, math.nan),
                                                 f"error:{exc.stage}", 0))
            for o in outcomes:
                if spec.kind == "maxmin-cdf":
                    rows.append(ResultRow(drop, block, C, B, o.precoder, "min_sinr", o.min_sinr, o.status, o.iters, g))
                    rows.append(ResultRow(drop, block, C, B, o.precoder, "min_rate", o.min_rate, o.status, o.iters, g))
                else:  # ee-sweep keeps per-block data for aggregation
                    rows.append(ResultRow(drop, block, C, B, o.precoder, "min_rate", o.min_rate, o.status, o.iters, g))
                    rows.append(ResultRow(drop, block, C, B, o.precoder, "p_bs_total",
                                          total_bs_power(power, c, o.tx_power), o.status, o.iters, g))
    return rows


def _aggregate_ee(rows: list[ResultRow], cfg: SystemConfig, power: PowerParams, spec: ExperimentSpec):
    """Per (C, B, precoder) EE from block means of min rate and consumed power.

    Both enter linearly, so averaging the per-block totals equals using the
    block-averaged radiated power in the amplifier term.
    """
    out = []
    for g, (C, B) in enumerate(_grid(spec)):
        c = cfg.with_resolution_capacity(B, C)
        for p in spec.precoders:
            rate = [r.value for r in rows if r.grid == g and r.precoder == p and r.metric == "min_rate"]
            tx = [r.value for r in rows if r.grid == g and r.precoder == p and r.metric == "p_bs_total"
                  and r.drop >= 0]
            ok = np.isfinite(rate) & np.isfinite(tx)
            if not ok.any():
                out.append(ResultRow(-1, -1, C, B, p, "ee", math.nan, "no-data", 0, g))
                continue
            bs_total = float(np.mean(np.asarray(tx)[ok]))
            ee = energy.energy_efficiency(float(np.mean(np.asarray(rate)[ok])), bs_total, c, C, power)
            status = "ok" if ok.all() else f"partial:{int(ok.sum())}/{ok.size}"
            out.append(ResultRow(-1, -1, C, B, p, "ee", ee, status, int(ok.sum()), g))
            out.append(ResultRow(-1, -1, C, B, p, "p_bs_total", bs_total, status, int(ok.sum()), g))
    return out


def _aqnm_rows(spec: ExperimentSpec) -> list[ResultRow]:
    rows = []
    for g, B in enumerate(spec.B_grid):
        if B == math.inf:
            continue
        chk = rf.validate_aqnm(int(B), AQNM_COV, spec.aqnm_samples, netgen.child_rng(spec.seed, 0, int(B), 0))
        for metric, value in (("aqnm_rho", chk.rho_empirical), ("aqnm_cov_rel_err", chk.cov_rel_err),
                              ("aqnm_offdiag", chk.offdiag), ("aqnm_corr", chk.corr)):
            rows.append(ResultRow(0, 0, math.inf, B, "none", metric, value, grid=g))
    return rows


def sweep(cfg: SystemConfig, power: PowerParams, spec: ExperimentSpec, threads: int = 1) -> list[ResultRow]:
    """Run the experiment in ``spec``; drops run in parallel when threads > 1."""
    if spec.kind == "validate-aqnm":
        return sorted(_aqnm_rows(spec), key=ResultRow.sort_key)
    if spec.kind == "ee-sweep":
        bad = [x for x in list(spec.C_grid) + list(spec.B_grid) if x == math.inf]
        if bad:
            raise StageError("harness", ValueError("ee-sweep needs finite C and B grids"))
    if spec.kind != "nmse-sweep" and "zf" in spec.precoders:
        cfg.require_zf()
    jobs = [(cfg, power, spec, d) for d in range(spec.n_drops)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_drop_rows, jobs))
    else:
        parts = [_drop_rows(j) for j in jobs]
    rows = [r for part in parts for r in part]
    if spec.kind == "ee-sweep":
        rows = rows + _aggregate_ee(rows, cfg, power, spec)
    return sorted(rows, key=ResultRow.sort_key)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if x.is_integer() and abs(x) < 2 ** 53:
        return str(int(x))
    return repr(x)


def format_results(rows, digest: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in sorted(rows, key=ResultRow.sort_key):
        if r.metric not in METRICS:
            raise ValueError(f"unknown metric {r.metric!r}")
        w.writerow([r.drop, r.block, _fmt(r.C), _fmt(r.B), r.precoder, r.metric, repr(float(r.value)),
                    r.status, r.iters, digest])
    return buf.getvalue()


def emit_results(rows, path, digest: str) -> Path:
    """Write the CSV (header always present) and return the path."""
    path = Path(path)
    try:
        path.write_text(format_results(rows, digest))
    except OSError as exc:
        raise StageError("emit", exc) from exc
    return path


def run_digest(cfg: SystemConfig, power: PowerParams, spec: ExperimentSpec) -> str:
    """Config hash over everything that changes results (the output path does not)."""
    return config_hash(cfg, power, dataclasses.replace(spec, out=""))
