"""Finite-length and asymptotic benchmarks from Monte Carlo information densities.

For one random-coding block (i.i.d. uniform symbols, differentially
modulated), the information density is i(s;r) = log2 p(r|s) - log2 p(r).  On
the coherent channel both terms factor per symbol and are evaluated in closed
form.  On the Wiener channel both are computed with the same discretized
phase grid and three-point transition kernel the detector uses: p(r|s) by the
forward recursion with the transmitted increments pinned, p(r) by the same
recursion with a uniform symbol mixture, each accumulating its per-step
normalizers.  Block averages of i/N estimate the achievable rate; the
per-block samples feed the dependency-testing upper bound on block error
probability with threshold K*log2(m) - 1.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import channel as chan
from .detector import (DP_THREE_POINT, PhaseGrid, TransitionModel,
                       block_log_likelihood, default_grid, likelihood_table)
from .receiver import DetectorConfig, default_workers

LN2 = math.log(2.0)


@dataclass
class DtBoundResult:
    ebn0_db: float
    k: int
    n: int
    m: int
    samples: int
    bound: float
    stderr: float
    mean_info_bits: float


def _uniform_increments(n: int, m: int, rng) -> np.ndarray:
    return rng.integers(0, m, size=n)


def _phases_from_increments(incr: np.ndarray, m: int) -> np.ndarray:
    idx = np.concatenate([[0], np.cumsum(incr) % m])
    return 2.0 * np.pi * idx / m


def coherent_info_density(samples: np.ndarray, phases: np.ndarray, m: int,
                          sigma2: float) -> float:
    """Closed-form i(s;r) in bits for a memoryless coherent block.

    The reference symbol carries no message information and is excluded.
    """
    points = np.exp(2j * np.pi * np.arange(m) / m)
    e = np.real(samples[1:, None] * points.conj()[None, :]) / sigma2
    idx = np.rint(phases[1:] * m / (2.0 * np.pi)).astype(int) % m
    e_cond = e[np.arange(len(idx)), idx]
    mix = logsumexp(e, axis=1) - math.log(m)
    return float(np.sum(e_cond - mix) / LN2)


def noncoherent_info_density(samples: np.ndarray, increments: np.ndarray,
                             m: int, sigma2: float, grid: PhaseGrid,
                             model: TransitionModel) -> float:
    """Grid-model i(s;r) in bits; both terms share the likelihood table, so
    its per-row rescaling and the reference-phase prior cancel."""
    n = len(increments)
    lik = likelihood_table(samples, grid, sigma2)
    d = grid.for_order(m)
    cond = np.zeros((n, m))
    cond[np.arange(n), np.asarray(increments, dtype=int)] = 1.0
    logp_cond = block_log_likelihood(lik, cond, d, model)
    mix = np.full((n, m), 1.0 / m)
    logp_mix = block_log_likelihood(lik, mix, d, model)
    return (logp_cond - logp_mix) / LN2


def info_density_samples(mode: str, m: int, sigma2: float,
                         sigma_delta_deg: float, n: int, blocks: int,
                         seed: int, det_cfg: DetectorConfig = DetectorConfig()
                         ) -> np.ndarray:
    """i(s;r) for ``blocks`` independent random-coding blocks of n symbols.

    Block b uses the rng stream (seed, b); noise is drawn unit-variance and
    scaled, so sweeping sigma2 with a fixed seed reuses the realizations
    (common random numbers across an Eb/N0 bisection).
    """
    params = chan.ChannelParams(mode=mode, sigma2=sigma2,
                                sigma_delta_deg=sigma_delta_deg)
    grid = det_cfg.grid(m)
    model = det_cfg.model(mode)
    out = np.empty(blocks)
    for b in range(blocks):
        rng = np.random.default_rng([seed, b])
        incr = _uniform_increments(n, m, rng)
        phases = _phases_from_increments(incr, m)
        received = chan.transmit(phases, params, rng)
        if mode == chan.COHERENT:
            out[b] = coherent_info_density(received.samples, phases, m, sigma2)
        else:
            out[b] = noncoherent_info_density(received.samples, incr, m,
                                              sigma2, grid, model)
    return out


def _info_chunk(args):
    mode, m, sigma2, sdd, n, b_lo, b_hi, seed, det_cfg = args
    params = chan.ChannelParams(mode=mode, sigma2=sigma2, sigma_delta_deg=sdd)
    grid = det_cfg.grid(m)
    model = det_cfg.model(mode)
    vals = []
    for b in range(b_lo, b_hi):
        rng = np.random.default_rng([seed, b])
        incr = _uniform_increments(n, m, rng)
        phases = _phases_from_increments(incr, m)
        received = chan.transmit(phases, params, rng)
        if mode == chan.COHERENT:
            vals.append(coherent_info_density(received.samples, phases, m, sigma2))
        else:
            vals.append(noncoherent_info_density(received.samples, incr, m,
                                                 sigma2, grid, model))
    return vals


def info_density_samples_parallel(mode, m, sigma2, sigma_delta_deg, n, blocks,
                                  seed, det_cfg=DetectorConfig(),
                                  workers=None) -> np.ndarray:
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1 or blocks < 2 * workers:
        return info_density_samples(mode, m, sigma2, sigma_delta_deg, n,
                                    blocks, seed, det_cfg)
    edges = np.linspace(0, blocks, 4 * workers + 1).astype(int)
    tasks = [(mode, m, sigma2, sigma_delta_deg, n, int(lo), int(hi), seed, det_cfg)
             for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_info_chunk, tasks))
    return np.concatenate([np.asarray(p) for p in parts])


def information_rate(mode: str, m: int, rate_code: float, ebn0_db: float,
                     sigma_delta_deg: float = 0.0, n_probe: int = 10000,
                     blocks: int = 20, seed: int = 0,
                     det_cfg: DetectorConfig = DetectorConfig(),
                     workers=None) -> tuple[float, float]:
    """(bits per channel use, standard error) at the given Eb/N0."""
    p = int(math.log2(m))
    sigma2 = chan.ebn0_to_sigma2(ebn0_db, rate_code, p)
    vals = info_density_samples_parallel(mode, m, sigma2, sigma_delta_deg,
                                         n_probe, blocks, seed, det_cfg, workers)
    rates = vals / n_probe
    return float(rates.mean()), float(rates.std(ddof=1) / math.sqrt(blocks))


def shannon_limit_db(mode: str, m: int, rate_code: float,
                     sigma_delta_deg: float = 0.0, n_probe: int = 10000,
                     blocks: int = 20, seed: int = 0, tol_db: float = 0.02,
                     lo_db: float = -4.0, hi_db: float = 16.0,
                     det_cfg: DetectorConfig = DetectorConfig(),
                     workers=None) -> float:
    """Eb/N0 where the information rate crosses rate_code * log2(m) bits/use.

    Bisection on a fixed seed: the rate is then a deterministic, effectively
    monotone function of Eb/N0.
    """
    p = int(math.log2(m))
    target = rate_code * p

    def rate_at(eb):
        r, _ = information_rate(mode, m, rate_code, eb, sigma_delta_deg,
                                n_probe, blocks, seed, det_cfg, workers)
        return r

    lo, hi = lo_db, hi_db
    if rate_at(lo) >= target:
        raise ValueError(f"target rate already achieved at {lo} dB")
    if rate_at(hi) < target:
        raise ValueError(f"target rate not achieved at {hi} dB")
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if rate_at(mid) >= target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def dt_bound(mode: str, m: int, k: int, n: int, ebn0_db: float,
             sigma_delta_deg: float = 0.0, samples: int = 100000,
             seed: int = 0, rate_for_ebn0: float | None = None,
             det_cfg: DetectorConfig = DetectorConfig(),
             workers=None) -> DtBoundResult:
    """Dependency-testing upper bound on block error probability.

    Monte Carlo average of 2^{-(i - (k log2 m - 1))^+} over blocks of n+1
    transmitted symbols (n increments plus the reference).  Eb/N0 converts to
    sigma^2 through the code rate k/n unless ``rate_for_ebn0`` overrides it.
    """
    if samples < 1000:
        raise ValueError("need at least 1000 Monte Carlo samples")
    p = int(math.log2(m))
    rate = k / n if rate_for_ebn0 is None else rate_for_ebn0
    sigma2 = chan.ebn0_to_sigma2(ebn0_db, rate, p)
    vals = info_density_samples_parallel(mode, m, sigma2, sigma_delta_deg,
                                         n, samples, seed, det_cfg, workers)
    thr = k * p - 1.0
    x = np.exp2(-np.maximum(vals - thr, 0.0))
    return DtBoundResult(ebn0_db=float(ebn0_db), k=k, n=n, m=m,
                         samples=samples, bound=float(x.mean()),
                         stderr=float(x.std(ddof=1) / math.sqrt(samples)),
                         mean_info_bits=float(vals.mean()))


def save_dt_csv(results, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ebn0_db", "dt_bound", "stderr"])
        for r in results:
            w.writerow([r.ebn0_db, f"{r.bound:.6e}", f"{r.stderr:.6e}"])


def save_rate_csv(points, path):
    """points: iterable of (ebn0_db, rate_bits, stderr)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ebn0_db", "info_rate_bits", "stderr"])
        for eb, rate, se in points:
            w.writerow([eb, f"{rate:.6f}", f"{se:.6e}"])
