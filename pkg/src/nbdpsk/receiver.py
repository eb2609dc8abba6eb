"""Turbo receiver loop and Monte Carlo codeword-error-rate campaigns.

One outer iteration = one detector pass followed by one BP decoder iteration,
with the detector-decoder interleaver and (optionally) channel adapters
applied between the two.  Campaigns derive every frame from an rng stream
keyed by (seed, point index, frame index), so results are bit-identical
regardless of how frames are distributed over workers.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import channel as chan
from .codec import Code, Decoder, hard_decision
from .detector import (DP_THREE_POINT, COHERENT_INDICATOR, DetectorWorkspace,
                       PhaseGrid, TransitionModel, default_grid)
from .dpsk import AdapterSequence, Interleaver, Mapping, apply_adapter, deadapt_pmfs, modulate
from .galois import uniform_pmf


@dataclass(frozen=True)
class TurboConfig:
    """Outer-loop schedule.

    Early stopping waits until the same syndrome-satisfying decision has held
    for ``early_stop_patience`` consecutive iterations: wrong-codeword states
    early in the loop are usually transient (the detector dislodges them
    within a couple of iterations), so stopping on first syndrome success
    would freeze errors the full fixed-iteration schedule does not make.
    Set ``early_stop=False`` to replicate the fixed-budget schedule exactly.
    """

    n_iterations: int = 200
    early_stop: bool = True
    early_stop_patience: int = 5
    adapters_enabled: bool = False

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ValueError("need at least one detector/decoder exchange")
        if self.early_stop_patience < 1:
            raise ValueError("patience must be at least 1")


@dataclass(frozen=True)
class DetectorConfig:
    p_delta: float = 0.1
    grid_multiplier: int = 8

    def grid(self, m: int) -> PhaseGrid:
        return default_grid(m, self.grid_multiplier)

    def model(self, mode: str) -> TransitionModel:
        if mode == chan.COHERENT:
            return TransitionModel(COHERENT_INDICATOR)
        return TransitionModel(DP_THREE_POINT, self.p_delta)


@dataclass
class FrameVerdict:
    decided: np.ndarray
    iterations_used: int
    syndrome_ok: bool
    codeword_error: bool | None = None
    symbol_errors: int | None = None


def run_frame(samples, code: Code, decoder: Decoder, interleaver: Interleaver,
              mapping: Mapping, adapters: AdapterSequence | None,
              params: chan.ChannelParams, det_cfg: DetectorConfig,
              turbo: TurboConfig, tx_codeword=None) -> FrameVerdict:
    """Detect/decode one received frame; stops on a satisfied syndrome if enabled."""
    m = mapping.field.m
    grid = det_cfg.grid(m)
    workspace = DetectorWorkspace(samples, grid, params.sigma2,
                                  det_cfg.model(params.mode), mapping)
    n = code.n
    det_prior = uniform_pmf(m, (n,))
    state = decoder.new_state()
    decided, ok = None, False
    iterations = 0
    stable = 0
    prev_key = None
    for iterations in range(1, turbo.n_iterations + 1):
        det_ext = workspace.extrinsics(det_prior)
        dec_prior = interleaver.invert(det_ext)
        if adapters is not None:
            dec_prior = deadapt_pmfs(dec_prior, adapters)
        app, dec_ext = decoder.bp_iteration(state, dec_prior)
        decided, ok = hard_decision(app, code.pcm)
        if turbo.early_stop:
            key = decided.tobytes() if ok else None
            stable = stable + 1 if (ok and key == prev_key) else (1 if ok else 0)
            prev_key = key
            if stable >= turbo.early_stop_patience:
                break
        feedback = dec_ext
        if adapters is not None:
            feedback = deadapt_pmfs(feedback, adapters)
        det_prior = interleaver.apply(feedback)
    verdict = FrameVerdict(decided=decided, iterations_used=iterations, syndrome_ok=ok)
    if tx_codeword is not None:
        errs = int(np.count_nonzero(decided != np.asarray(tx_codeword)))
        verdict.symbol_errors = errs
        verdict.codeword_error = errs > 0
    return verdict


# ---------------------------------------------------------------------------
# campaign machinery
# ---------------------------------------------------------------------------

@dataclass
class CampaignPoint:
    ebn0_db: float
    frames: int
    cw_errors: int
    cer: float
    ci_low: float
    ci_high: float
    avg_iters: float


@dataclass
class CampaignResult:
    points: list
    config: dict

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["ebn0_db", "frames", "cw_errors", "cer",
                        "ci_low", "ci_high", "avg_iters"])
            for p in self.points:
                w.writerow([p.ebn0_db, p.frames, p.cw_errors,
                            f"{p.cer:.6e}", f"{p.ci_low:.6e}", f"{p.ci_high:.6e}",
                            f"{p.avg_iters:.3f}"])

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump({"config": self.config,
                       "points": [asdict(p) for p in self.points]}, f, indent=2)


def wilson_interval(k: int, n: int, z: float = 1.959964) -> tuple[float, float]:
    """95% score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    ph = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (ph + z2 / (2 * n)) / denom
    half = z * math.sqrt(ph * (1 - ph) / n + z2 / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class CampaignSpec:
    """Everything needed to simulate any (point, frame) pair deterministically."""

    pcm_labels: np.ndarray
    field_p: int
    field_poly: int
    mapping_table: np.ndarray
    mode: str
    sigma_delta_deg: float
    ebn0_grid: tuple
    rate: float          # rate used for the Eb/N0 -> sigma^2 conversion
    turbo: TurboConfig
    detector: DetectorConfig
    interleaver_per_frame: bool
    seed: int


class _FrameRunner:
    """Rebuilds the heavyweight objects once per process."""

    def __init__(self, spec: CampaignSpec):
        from .galois import Field
        from .protograph import ParityCheckMatrix
        self.spec = spec
        fld = Field(spec.field_p, spec.field_poly)
        pcm = ParityCheckMatrix(spec.pcm_labels, fld)
        self.code = Code(pcm)
        self.decoder = Decoder(pcm)
        self.mapping = Mapping(fld, spec.mapping_table)
        self.fixed_interleaver = Interleaver(
            self.code.n, np.random.default_rng([spec.seed, 0xA11CE]))

    def run(self, point_idx: int, frame_idx: int):
        spec = self.spec
        rng = np.random.default_rng([spec.seed, point_idx, frame_idx])
        fld = self.mapping.field
        params = chan.ChannelParams.from_ebn0(
            spec.mode, spec.ebn0_grid[point_idx], spec.rate, fld.p,
            spec.sigma_delta_deg)
        u = rng.integers(0, fld.m, size=self.code.k)
        v = self.code.encode(u)
        adapters = (AdapterSequence.draw(self.code.n, fld, rng)
                    if spec.turbo.adapters_enabled else None)
        w = apply_adapter(v, adapters) if adapters is not None else v
        interleaver = (Interleaver(self.code.n, rng)
                       if spec.interleaver_per_frame else self.fixed_interleaver)
        phases = modulate(w, interleaver, self.mapping)
        received = chan.transmit(phases, params, rng)
        verdict = run_frame(received.samples, self.code, self.decoder,
                            interleaver, self.mapping, adapters, params,
                            spec.detector, spec.turbo, tx_codeword=v)
        return verdict.codeword_error, verdict.iterations_used


_WORKER_RUNNER = None


def _worker_init(spec):
    global _WORKER_RUNNER
    _WORKER_RUNNER = _FrameRunner(spec)


def _worker_run(task):
    return _WORKER_RUNNER.run(*task)


def default_workers() -> int:
    env = os.environ.get("NBDPSK_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_campaign(code: Code, mapping: Mapping, mode: str, ebn0_grid,
                 sigma_delta_deg: float = 0.0, trials_target: int = 10000,
                 error_target: int = 100, seed: int = 0,
                 turbo: TurboConfig = TurboConfig(),
                 detector: DetectorConfig = DetectorConfig(),
                 interleaver_per_frame: bool = False,
                 workers: int | None = None,
                 rate: float | None = None,
                 progress=None) -> CampaignResult:
    """CER versus Eb/N0.  Each point stops at ``error_target`` codeword errors
    (counted in frame order) or ``trials_target`` frames, whichever is first;
    ``error_target=0`` always runs ``trials_target`` frames."""
    if not len(ebn0_grid):
        raise ValueError("empty Eb/N0 grid")
    spec = CampaignSpec(
        pcm_labels=code.pcm.labels, field_p=code.field.p,
        field_poly=code.field.poly, mapping_table=mapping.table,
        mode=mode, sigma_delta_deg=sigma_delta_deg,
        ebn0_grid=tuple(float(x) for x in ebn0_grid),
        rate=code.rate if rate is None else rate,
        turbo=turbo, detector=detector,
        interleaver_per_frame=interleaver_per_frame, seed=seed)
    workers = default_workers() if workers is None else max(1, workers)

    points = []
    if workers == 1:
        runner = _FrameRunner(spec)
        for pi in range(len(spec.ebn0_grid)):
            points.append(_run_point(spec, pi, trials_target, error_target,
                                     lambda tasks: [runner.run(*t) for t in tasks]))
            if progress:
                progress(points[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                                 initargs=(spec,)) as pool:
            for pi in range(len(spec.ebn0_grid)):
                points.append(_run_point(
                    spec, pi, trials_target, error_target,
                    lambda tasks: list(pool.map(_worker_run, tasks,
                                                chunksize=max(1, len(tasks) // (4 * workers))))))
                if progress:
                    progress(points[-1])
    cfg = {
        "mode": mode, "sigma_delta_deg": sigma_delta_deg,
        "ebn0_grid": list(spec.ebn0_grid), "trials_target": trials_target,
        "error_target": error_target, "seed": seed, "rate": spec.rate,
        "turbo": asdict(turbo), "detector": asdict(detector),
        "interleaver_per_frame": interleaver_per_frame,
        "n": code.n, "k": code.k, "m": code.field.m,
    }
    return CampaignResult(points=points, config=cfg)


def _run_point(spec, point_idx, trials_target, error_target, mapper) -> CampaignPoint:
    batch = 256
    outcomes = []
    errors = 0
    stop_at = None
    while len(outcomes) < trials_target and stop_at is None:
        lo = len(outcomes)
        hi = min(trials_target, lo + batch)
        outcomes.extend(mapper([(point_idx, fi) for fi in range(lo, hi)]))
        if error_target > 0:
            errors = 0
            for fi, (is_err, _) in enumerate(outcomes):
                errors += bool(is_err)
                if errors >= error_target:
                    stop_at = fi + 1
                    break
        batch = min(4096, batch * 2)
    if stop_at is not None:
        outcomes = outcomes[:stop_at]
    frames = len(outcomes)
    cw_errors = sum(bool(e) for e, _ in outcomes)
    iters = np.mean([it for _, it in outcomes]) if outcomes else 0.0
    lo_ci, hi_ci = wilson_interval(cw_errors, frames)
    return CampaignPoint(ebn0_db=spec.ebn0_grid[point_idx], frames=frames,
                         cw_errors=cw_errors, cer=cw_errors / max(frames, 1),
                         ci_low=lo_ci, ci_high=hi_ci, avg_iters=float(iters))
