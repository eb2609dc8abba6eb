"""Monte Carlo density evolution on the joint detector/decoder graph.

Ensemble behavior is emulated by decoding on a large lifted graph whose edge
permutations and labels are redrawn every iteration.  An all-zero codeword is
transmitted behind random channel adapters and a fresh symbol interleaver per
attempt; the residual symbol error rate after the iteration budget decides
whether an Eb/N0 point is above or below the ensemble threshold, which is
then located by bisection.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import channel as chan
from .codec import Code, loo_products
from .detector import DetectorWorkspace
from .dpsk import AdapterSequence, Interleaver, Mapping, deadapt_pmfs, modulate
from .galois import Field, hadamard, normalize_pmf, uniform_pmf
from .protograph import (canonical_key, design_rate, enumerate_candidates,
                         expand_peg, refine_candidates)
from .receiver import DetectorConfig, TurboConfig, run_campaign


class NonConvergent(RuntimeError):
    """No converging Eb/N0 found inside the configured bisection range."""


class Exhausted(RuntimeError):
    """Every refinement candidate showed an error floor above the target."""


@dataclass(frozen=True)
class DeConfig:
    """Knobs of the Monte Carlo density evolution; all echoed into results.

    A probe point converges when at least ``majority_fraction`` of the
    attempts reach a residual symbol error rate below ``ser_target``.  At
    finite lifting the per-attempt outcome is bimodal (each attempt either
    converges or locks into a nonzero fixed point, depending on its channel
    realization), so the attempt-median is the stable finite-size estimate of
    the ensemble threshold; requiring every attempt to converge reads the
    upper edge of the transition window instead and sits measurably higher.
    """

    lifting: int = 2000
    i_max: int = 400
    ser_target: float = 1e-4
    majority_fraction: float = 0.5
    tol_db: float = 0.05
    min_symbols: int = 20000
    min_attempts: int = 9
    ebn0_min_db: float = 0.0
    ebn0_max_db: float = 12.0
    scan_step_db: float = 0.5
    stall_window: int = 80
    seed: int = 0
    detector: DetectorConfig = field(default_factory=DetectorConfig)

    def attempts(self, n_symbols: int) -> int:
        return max(self.min_attempts, math.ceil(self.min_symbols / n_symbols))


@dataclass
class ThresholdResult:
    base: list
    threshold_db: float
    bracket_db: tuple
    mode: str
    sigma_delta_deg: float
    config: dict
    probes: list  # (ebn0_db, aggregate ser, fraction converged, converged)


@dataclass
class SearchReport:
    ranking: list          # dicts: base, threshold_db or None, error
    selected: list | None
    trail: list = field(default_factory=list)

    def to_json(self, path):
        with open(path, "w") as f:
            json.dump({"ranking": self.ranking, "selected": self.selected,
                       "trail": self.trail}, f, indent=2)

    def thresholds_to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["base_matrix", "threshold_db"])
            for entry in self.ranking:
                thr = entry["threshold_db"]
                w.writerow([entry["base"],
                            "n/a" if thr is None else f"{thr:.3f}"])


class EnsembleGraph:
    """Lifted protograph with per-iteration re-randomized edges and labels.

    Variable node (type j, copy t) is index j*lifting + t; messages are held
    per base-edge slot as (lifting, m) arrays on the variable side.
    """

    def __init__(self, base: np.ndarray, lifting: int, fld: Field):
        base = np.asarray(base, dtype=np.int64)
        self.base = base
        self.lifting = lifting
        self.field = fld
        self.m_b, self.n_b = base.shape
        self.n_symbols = self.n_b * lifting
        self.slots = [(i, j) for j in range(self.n_b) for i in range(self.m_b)
                      for _ in range(base[i, j])]
        self.cn_slots = [[s for s, (i, _) in enumerate(self.slots) if i == ci]
                         for ci in range(self.m_b)]
        self.vn_slots = [[s for s, (_, j) in enumerate(self.slots) if j == vj]
                         for vj in range(self.n_b)]
        # check-to-variable messages per slot, variable-copy indexed
        self.c2v = [np.full((lifting, fld.m), 1.0 / fld.m) for _ in self.slots]

    def iterate(self, priors: np.ndarray, rng: np.random.Generator):
        """One decoder iteration on freshly drawn permutations and labels:
        variable updates with the fresh priors, then check updates.

        ``priors`` is (n_symbols, m), variable-major.  Returns (app, extrinsic)
        in the same layout.
        """
        lam, m, fld = self.lifting, self.field.m, self.field
        prior_t = [priors[j * lam:(j + 1) * lam] for j in range(self.n_b)]

        # variable side: leave-one-out over the stored check messages
        v2c = [None] * len(self.slots)
        for vj in range(self.n_b):
            slots = self.vn_slots[vj]
            stack = np.stack([self.c2v[s] for s in slots], axis=1)
            prods = loo_products(stack)
            for k, s in enumerate(slots):
                v2c[s] = normalize_pmf(prior_t[vj] * prods[:, k, :])

        # check side: route to check copies, permute through labels, transform
        perms = [rng.permutation(lam) for _ in self.slots]
        labels = [rng.integers(1, fld.m, size=lam) for _ in self.slots]
        for ci in range(self.m_b):
            slots = self.cn_slots[ci]
            stack = np.empty((lam, len(slots), m))
            for k, s in enumerate(slots):
                w = np.take_along_axis(v2c[s][perms[s]],
                                       fld._perm_mul[labels[s]], axis=1)
                stack[:, k, :] = hadamard(w)
            prods = loo_products(stack)
            for k, s in enumerate(slots):
                msg_w = np.maximum(hadamard(prods[:, k, :]) / m, 0.0)
                back = np.take_along_axis(msg_w, fld._perm_mul_back[labels[s]], axis=1)
                out = np.empty_like(back)
                out[perms[s]] = back
                self.c2v[s] = normalize_pmf(out)

        app = np.empty_like(priors)
        ext = np.empty_like(priors)
        for vj in range(self.n_b):
            slots = self.vn_slots[vj]
            stack = np.stack([self.c2v[s] for s in slots], axis=1)
            app_j = normalize_pmf(prior_t[vj] * stack.prod(axis=1))
            app[vj * lam:(vj + 1) * lam] = app_j
            ext[vj * lam:(vj + 1) * lam] = normalize_pmf(
                app_j / np.maximum(prior_t[vj], 1e-300))
        return app, ext


def de_attempt(base: np.ndarray, fld: Field, mapping: Mapping,
               params: chan.ChannelParams, cfg: DeConfig,
               rng: np.random.Generator) -> tuple[int, int]:
    """One decoding attempt on the lifted graph; returns (symbol_errors, iterations).

    Early exit on two consecutive error-free iterations, or on a stalled
    error count well above the target.
    """
    graph = EnsembleGraph(base, cfg.lifting, fld)
    n = graph.n_symbols
    m = fld.m
    adapters = AdapterSequence.draw(n, fld, rng)
    interleaver = Interleaver(n, rng)
    phases = modulate(adapters.values, interleaver, mapping)  # all-zero codeword
    received = chan.transmit(phases, params, rng)
    workspace = DetectorWorkspace(received.samples, cfg.detector.grid(m),
                                  params.sigma2, cfg.detector.model(params.mode),
                                  mapping)
    det_prior = uniform_pmf(m, (n,))
    errors = n
    zero_streak = 0
    best = n
    best_iter = 0
    it = 0
    for it in range(1, cfg.i_max + 1):
        det_ext = workspace.extrinsics(det_prior)
        dec_prior = deadapt_pmfs(interleaver.invert(det_ext), adapters)
        app, dec_ext = graph.iterate(dec_prior, rng)
        errors = int(np.count_nonzero(np.argmax(app, axis=1)))
        if errors == 0:
            zero_streak += 1
            if zero_streak >= 2:
                break
        else:
            zero_streak = 0
        if errors < best:
            best, best_iter = errors, it
        # abort only clearly diverged attempts; marginal ones run to i_max
        stalled = (it - best_iter >= cfg.stall_window
                   and errors > 50.0 * cfg.ser_target * n)
        if stalled:
            break
        det_prior = interleaver.apply(deadapt_pmfs(dec_ext, adapters))
    return errors, it


def _evaluate_point(base, fld, mapping, mode, sigma_delta_deg, ebn0_db,
                    rate, cfg: DeConfig):
    """Returns (aggregate ser, fraction of converged attempts, converged flag).

    Attempt rng streams are keyed (seed, attempt) only, so the same channel
    realizations are reused at every probed Eb/N0 (noise is scaled from unit
    draws): each attempt has a well-defined personal threshold and the
    majority vote is a monotone function of Eb/N0.
    """
    params = chan.ChannelParams.from_ebn0(mode, ebn0_db, rate, fld.p,
                                          sigma_delta_deg)
    n_symbols = np.asarray(base).shape[1] * cfg.lifting
    attempts = cfg.attempts(n_symbols)
    need = math.ceil(cfg.majority_fraction * attempts)
    total_errors = 0
    wins = 0
    done = 0
    for attempt in range(attempts):
        rng = np.random.default_rng([cfg.seed, attempt])
        errors, _ = de_attempt(base, fld, mapping, params, cfg, rng)
        total_errors += errors
        wins += (errors / n_symbols) < cfg.ser_target
        done += 1
        if wins >= need or wins + (attempts - done) < need:
            break  # majority vote already decided
    ser = total_errors / (done * n_symbols)
    return ser, wins / done, wins >= need


def mc_de_threshold(base: np.ndarray, fld: Field, mapping: Mapping, mode: str,
                    sigma_delta_deg: float, cfg: DeConfig,
                    progress=None) -> ThresholdResult:
    """Ensemble threshold in Eb/N0 by scan-then-bisect on the convergence flag.

    The attempt rng streams are shared across probe points (the noise is
    drawn unit-variance and scaled), so the convergence indicator is close to
    monotone in Eb/N0 and the bisection is stable.
    """
    base = np.asarray(base, dtype=np.int64)
    rate = design_rate(base)
    if not 0.0 < rate < 1.0:
        raise ValueError(f"design rate {rate} outside (0,1)")
    probes = []

    def probe(eb):
        ser, frac, conv = _evaluate_point(base, fld, mapping, mode,
                                          sigma_delta_deg, eb, rate, cfg)
        probes.append((float(eb), float(ser), float(frac), bool(conv)))
        if progress:
            progress(probes[-1])
        return conv

    # bracket by upward scan
    lo, hi = None, None
    eb = cfg.ebn0_min_db
    while eb <= cfg.ebn0_max_db + 1e-9:
        if probe(eb):
            hi = eb
            lo = eb - cfg.scan_step_db
            break
        lo = eb
        eb += cfg.scan_step_db
    if hi is None:
        raise NonConvergent(
            f"no convergence up to {cfg.ebn0_max_db} dB for base {base.tolist()}")
    if hi == cfg.ebn0_min_db:
        # converged at the bottom of the range; walk down until it fails
        eb = cfg.ebn0_min_db - cfg.scan_step_db
        lo = None
        while eb > cfg.ebn0_min_db - 20.0:
            if not probe(eb):
                lo = eb
                break
            hi = eb
            eb -= cfg.scan_step_db
        if lo is None:
            raise NonConvergent("convergence persists far below the scan range")
    while hi - lo > cfg.tol_db:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            hi = mid
        else:
            lo = mid
    return ThresholdResult(
        base=base.tolist(), threshold_db=0.5 * (lo + hi), bracket_db=(lo, hi),
        mode=mode, sigma_delta_deg=sigma_delta_deg,
        config=asdict(cfg), probes=probes)


def _rank_candidates(cands, fld, mapping, mode, sigma_delta_deg, cfg, progress):
    ranking = []
    for b in cands:
        entry = {"base": np.asarray(b).tolist(), "threshold_db": None, "error": None}
        try:
            res = mc_de_threshold(b, fld, mapping, mode, sigma_delta_deg, cfg,
                                  progress=progress)
            entry["threshold_db"] = res.threshold_db
            entry["bracket_db"] = list(res.bracket_db)
        except NonConvergent as exc:
            entry["error"] = str(exc)
        ranking.append(entry)

    def sort_key(entry):
        b = np.asarray(entry["base"])
        thr = entry["threshold_db"]
        return (thr is None, thr if thr is not None else 0.0,
                int(b.sum()), canonical_key(b))

    ranking.sort(key=sort_key)
    return ranking


def search_step1(m_b: int, n_b: int, p_max: int, fld: Field, mapping: Mapping,
                 mode: str, sigma_delta_deg: float, cfg: DeConfig,
                 progress=None) -> SearchReport:
    """Enumerate, expurgate, deduplicate, rank by threshold, select the best."""
    if n_b <= m_b:
        raise ValueError(f"design rate {(n_b - m_b)}/{n_b} is not in (0,1)")
    cands = enumerate_candidates(m_b, n_b, p_max)
    ranking = _rank_candidates(cands, fld, mapping, mode, sigma_delta_deg, cfg,
                               progress)
    selected = ranking[0]["base"] if ranking and ranking[0]["threshold_db"] is not None else None
    return SearchReport(ranking=ranking, selected=selected)


@dataclass(frozen=True)
class CerProbeConfig:
    """Finite-length probe used by the refinement step's floor check.

    Each candidate is expanded once per entry of ``expansion_seeds`` (distinct
    samples from the same ensemble); the first realization whose CER curve
    reaches the target without flattening is accepted.
    """

    n_target: int = 160
    target_cer: float = 1e-3
    start_offset_db: float = 0.5
    step_db: float = 0.5
    max_points: int = 8
    error_target: int = 50
    trials_cap: int = 200000
    floor_slope: float = 0.5          # decades per dB
    expansion_seeds: tuple = (1, 2, 3)
    campaign_seed: int = 7
    workers: int | None = None
    turbo: TurboConfig = field(default_factory=TurboConfig)


def detect_floor(ebn0s, cers, target_cer: float, floor_slope: float) -> bool:
    """Slope rule on the last three points of a CER curve (log10 domain)."""
    if len(ebn0s) < 3:
        return False
    x = np.asarray(ebn0s[-3:], dtype=float)
    y = np.log10(np.maximum(np.asarray(cers[-3:], dtype=float), 1e-300))
    slope = np.polyfit(x, y, 1)[0]
    return abs(slope) < floor_slope and cers[-1] > target_cer


def cer_probe(base, fld, mapping, mode, sigma_delta_deg, threshold_db,
              det_cfg: DetectorConfig, probe_cfg: CerProbeConfig,
              expansion_seed: int = 1):
    """Expand the base, sweep CER from just above the threshold downward, and
    report whether the curve reaches the target without flattening."""
    pcm = expand_peg(base, probe_cfg.n_target, fld, expansion_seed)
    code = Code(pcm)
    points = []
    floor = False
    reached = False
    eb = threshold_db + probe_cfg.start_offset_db
    for _ in range(probe_cfg.max_points):
        res = run_campaign(
            code, mapping, mode, [eb], sigma_delta_deg=sigma_delta_deg,
            trials_target=probe_cfg.trials_cap,
            error_target=probe_cfg.error_target, seed=probe_cfg.campaign_seed,
            turbo=probe_cfg.turbo, detector=det_cfg,
            workers=probe_cfg.workers)
        pt = res.points[0]
        points.append({"ebn0_db": pt.ebn0_db, "cer": pt.cer,
                       "frames": pt.frames, "cw_errors": pt.cw_errors})
        if pt.cer <= probe_cfg.target_cer:
            reached = True
            break
        if detect_floor([p["ebn0_db"] for p in points],
                        [p["cer"] for p in points],
                        probe_cfg.target_cer, probe_cfg.floor_slope):
            floor = True
            break
        eb += probe_cfg.step_db
    if not reached and not floor:
        floor = True  # never reached the target inside the grid
    return {"code_n": code.n, "code_k": code.k,
            "expansion_seed": expansion_seed, "points": points,
            "floor": bool(floor)}


class ExhaustedWithReport(Exhausted):
    """Exhausted, carrying the best-effort report."""

    def __init__(self, report: "SearchReport"):
        super().__init__("all refinement candidates show an error floor")
        self.report = report


def search_step2(base_star: np.ndarray, fld: Field, mapping: Mapping, mode: str,
                 sigma_delta_deg: float, cfg: DeConfig,
                 probe_cfg: CerProbeConfig, progress=None) -> SearchReport:
    """Refine a step-1 winner until a candidate shows no floor above the target."""
    expanded, cands = refine_candidates(np.asarray(base_star))
    ranking = _rank_candidates(cands, fld, mapping, mode, sigma_delta_deg, cfg,
                               progress)
    trail = [{"expanded_base": expanded.tolist()}]
    for entry in ranking:
        if entry["threshold_db"] is None:
            continue
        for seed in probe_cfg.expansion_seeds:
            result = cer_probe(np.asarray(entry["base"]), fld, mapping, mode,
                               sigma_delta_deg, entry["threshold_db"],
                               cfg.detector, probe_cfg, expansion_seed=seed)
            trail.append({"base": entry["base"],
                          "threshold_db": entry["threshold_db"], **result})
            if not result["floor"]:
                return SearchReport(ranking=ranking, selected=entry["base"],
                                    trail=trail)
    report = SearchReport(ranking=ranking, selected=None, trail=trail)
    raise ExhaustedWithReport(report)
