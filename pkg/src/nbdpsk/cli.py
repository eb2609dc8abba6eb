"""Command-line front end: config-driven campaigns, design search, bounds, codegen.

Configs are INI-style text (key = value under [section] headers); every
resolved value, including defaults, is echoed into a run manifest JSON that
suffices to reproduce the outputs bit for bit.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import bounds as bounds_mod
from . import channel as chan
from .codec import Code
from .dpsk import Mapping
from .ensemble import (CerProbeConfig, DeConfig, Exhausted, ExhaustedWithReport,
                       NonConvergent, mc_de_threshold, search_step1, search_step2)
from .galois import Field, NonPrimitivePolynomial
from .protograph import ParityCheckMatrix, expand_peg, load_base
from .receiver import (DetectorConfig, TurboConfig, default_workers,
                       run_campaign)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENT = 3


class ConfigError(ValueError):
    pass


def _parse_grid(text: str) -> list[float]:
    """Eb/N0 grid: either comma-separated values or start:stop:step."""
    text = text.strip()
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        n = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 10) for i in range(n)]
    return [float(x) for x in text.split(",") if x.strip()]


class RunSettings:
    """Validated view of one config file."""

    def __init__(self, parser: configparser.ConfigParser, overrides):
        self.raw = {s: dict(parser.items(s)) for s in parser.sections()}

        def get(section, key, default=None, cast=str):
            try:
                value = parser.get(section, key)
            except (configparser.NoSectionError, configparser.NoOptionError):
                if default is None:
                    raise ConfigError(f"missing [{section}] {key}")
                return default
            try:
                if cast is bool:
                    return parser.getboolean(section, key)
                return cast(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {exc}")

        self.command = get("run", "command")
        if self.command not in ("simulate", "threshold", "design", "bound", "codegen"):
            raise ConfigError(f"unknown command {self.command!r}")

        p = get("code", "field_p", cast=int, default=3)
        poly = get("code", "primitive_poly", cast=int, default=0)
        try:
            self.field = Field(p, poly or None)
        except (ValueError, NonPrimitivePolynomial) as exc:
            raise ConfigError(str(exc))
        mapping_id = get("code", "mapping", default="gray")
        if mapping_id == "gray":
            self.mapping = Mapping.gray(self.field)
        else:
            path = Path(mapping_id)
            if not path.exists():
                raise ConfigError(f"mapping {mapping_id!r} is neither 'gray' "
                                  f"nor an existing file")
            self.mapping = Mapping.load(path, self.field)

        self.base = None
        base_text = get("code", "base_matrix", default="")
        if base_text:
            rows = [r for r in base_text.replace(",", ";").split(";") if r.strip()]
            self.base = np.array([[int(x) for x in r.split()] for r in rows])
        base_file = get("code", "base_file", default="")
        if base_file:
            self.base = load_base(base_file)
        self.alist = get("code", "alist", default="") or None
        self.n_target = get("code", "n", cast=int, default=0)
        self.expansion_seed = get("code", "expansion_seed", cast=int, default=1)

        self.mode = get("channel", "mode", default=chan.WIENER)
        if self.mode not in (chan.COHERENT, chan.WIENER):
            raise ConfigError(f"unknown channel mode {self.mode!r}")
        self.sigma_delta_deg = get("channel", "sigma_delta_deg", cast=float,
                                   default=0.0)
        grid_text = get("channel", "ebn0_db", default="")
        self.ebn0_grid = _parse_grid(grid_text) if grid_text else []

        self.turbo = TurboConfig(
            n_iterations=get("turbo", "iterations", cast=int, default=200),
            early_stop=get("turbo", "early_stop", cast=bool, default=True),
            early_stop_patience=get("turbo", "early_stop_patience", cast=int,
                                    default=5),
            adapters_enabled=get("turbo", "adapters", cast=bool, default=False))
        grid_mult = get("turbo", "grid_multiplier", cast=int, default=8)
        if (grid_mult * self.field.m) % self.field.m:
            raise ConfigError("grid size must be a multiple of the field order")
        self.detector = DetectorConfig(
            p_delta=get("turbo", "p_delta", cast=float, default=0.1),
            grid_multiplier=grid_mult)

        self.seed = get("montecarlo", "seed", cast=int, default=0)
        self.trials = get("montecarlo", "trials", cast=int, default=10000)
        self.error_target = get("montecarlo", "error_target", cast=int,
                                default=100)
        self.interleaver_per_frame = get("montecarlo", "interleaver_per_frame",
                                         cast=bool, default=False)

        self.de = DeConfig(
            lifting=get("design", "lifting", cast=int, default=2000),
            i_max=get("design", "de_iterations", cast=int, default=400),
            ser_target=get("design", "ser_target", cast=float, default=1e-4),
            tol_db=get("design", "tol_db", cast=float, default=0.05),
            ebn0_min_db=get("design", "ebn0_min_db", cast=float, default=0.0),
            ebn0_max_db=get("design", "ebn0_max_db", cast=float, default=12.0),
            seed=self.seed, detector=self.detector)
        self.design_dims = (get("design", "m_b", cast=int, default=1),
                            get("design", "n_b", cast=int, default=2),
                            get("design", "p_max", cast=int, default=4))
        self.design_step2 = get("design", "step2", cast=bool, default=False)
        self.probe = CerProbeConfig(
            n_target=get("design", "probe_n", cast=int,
                         default=self.n_target or 160),
            target_cer=get("design", "target_cer", cast=float, default=1e-3),
            turbo=self.turbo)

        self.bound_k = get("bound", "k", cast=int, default=0)
        self.bound_n = get("bound", "n", cast=int, default=0)
        self.bound_samples = get("bound", "samples", cast=int, default=100000)
        self.bound_rate = get("bound", "target_rate", cast=float, default=0.0)
        self.bound_blocks = get("bound", "blocks", cast=int, default=20)
        self.bound_nprobe = get("bound", "n_probe", cast=int, default=10000)
        self.bound_kind = get("bound", "kind", default="dt")

        for key, value in overrides.items():
            setattr(self, key, value)

    def build_code(self) -> Code:
        if self.alist:
            return Code(ParityCheckMatrix.load_alist(self.alist, self.field))
        if self.base is None:
            raise ConfigError("need [code] base_matrix, base_file, or alist")
        if not self.n_target:
            raise ConfigError("need [code] n (target block length)")
        if self.n_target < self.base.shape[1]:
            raise ConfigError("[code] n is below the base matrix width")
        pcm = expand_peg(self.base, self.n_target, self.field,
                         self.expansion_seed)
        return Code(pcm)


def _manifest(settings: RunSettings, args, started, outputs, extras=None):
    return {
        "version": __version__,
        "command": settings.command,
        "config_file": str(args.config),
        "config": settings.raw,
        "seed": settings.seed,
        "workers": args.workers,
        "started_unix": started,
        "wall_seconds": time.time() - started,
        "outputs": outputs,
        **(extras or {}),
    }


def cmd_simulate(settings: RunSettings, args, out: Path, started: float) -> int:
    if not settings.ebn0_grid:
        raise ConfigError("need [channel] ebn0_db grid")
    code = settings.build_code()
    result = run_campaign(
        code, settings.mapping, settings.mode, settings.ebn0_grid,
        sigma_delta_deg=settings.sigma_delta_deg,
        trials_target=settings.trials, error_target=settings.error_target,
        seed=settings.seed, turbo=settings.turbo, detector=settings.detector,
        interleaver_per_frame=settings.interleaver_per_frame,
        workers=args.workers,
        progress=lambda p: print(f"  {p.ebn0_db:6.2f} dB  cer {p.cer:.3e} "
                                 f"({p.cw_errors}/{p.frames})", flush=True))
    csv_path, json_path = out / "campaign.csv", out / "campaign.json"
    result.to_csv(csv_path)
    result.to_json(json_path)
    manifest = _manifest(settings, args, started,
                         [str(csv_path), str(json_path)],
                         {"code": {"n": code.n, "k": code.k,
                                   "rate": code.rate,
                                   "girth": code.pcm.meta.get("girth")}})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return EXIT_OK

def cmd_threshold(settings: RunSettings, args, out: Path, started: float) -> int:
    if settings.base is None:
        raise ConfigError("need [code] base_matrix or base_file")
    res = mc_de_threshold(settings.base, settings.field, settings.mapping,
                          settings.mode, settings.sigma_delta_deg, settings.de,
                          progress=lambda p: print(
                              f"  probe {p[0]:6.3f} dB  ser {p[1]:.2e}  "
                              f"frac {p[2]:.2f}", flush=True))
    payload = {"base": res.base, "threshold_db": res.threshold_db,
               "bracket_db": list(res.bracket_db), "mode": res.mode,
               "sigma_delta_deg": res.sigma_delta_deg, "config": res.config,
               "probes": res.probes}
    path = out / "threshold.json"
    path.write_text(json.dumps(payload, indent=2))
    print(f"threshold {res.threshold_db:.3f} dB (bracket {res.bracket_db})")
    (out / "manifest.json").write_text(
        json.dumps(_manifest(settings, args, started, [str(path)]), indent=2))
    return EXIT_OK


def cmd_design(settings: RunSettings, args, out: Path, started: float) -> int:
    m_b, n_b, p_max = settings.design_dims
    report = search_step1(m_b, n_b, p_max, settings.field, settings.mapping,
                          settings.mode, settings.sigma_delta_deg, settings.de,
                          progress=lambda p: print(
                              f"  probe {p[0]:6.3f} dB  frac {p[2]:.2f}",
                              flush=True))
    outputs = []
    path = out / "step1.json"
    report.to_json(path)
    outputs.append(str(path))
    csv_path = out / "thresholds.csv"
    report.thresholds_to_csv(csv_path)
    outputs.append(str(csv_path))
    print("step-1 ranking:")
    for entry in report.ranking:
        thr = entry["threshold_db"]
        print(f"  {entry['base']}: "
              f"{'n/a' if thr is None else format(thr, '.3f')} dB")
    if settings.design_step2:
        if report.selected is None:
            raise NonConvergent("no step-1 winner to refine")
        report2 = search_step2(np.array(report.selected), settings.field,
                               settings.mapping, settings.mode,
                               settings.sigma_delta_deg, settings.de,
                               settings.probe)
        path2 = out / "step2.json"
        report2.to_json(path2)
        outputs.append(str(path2))
        print(f"step-2 selection: {report2.selected}")
    (out / "manifest.json").write_text(
        json.dumps(_manifest(settings, args, started, outputs), indent=2))
    return EXIT_OK


def cmd_codegen(settings: RunSettings, args, out: Path, started: float) -> int:
    code = settings.build_code()
    path = out / "code.alist"
    code.pcm.save_alist(path)
    print(f"wrote ({code.n},{code.k}) code over GF({settings.field.m}), "
          f"girth {code.pcm.meta.get('girth')}")
    (out / "manifest.json").write_text(json.dumps(
        _manifest(settings, args, started, [str(path)],
                  {"code": {"n": code.n, "k": code.k, "rate": code.rate,
                            "girth": code.pcm.meta.get("girth")}}), indent=2))
    return EXIT_OK


def cmd_bound(settings: RunSettings, args, out: Path, started: float) -> int:
    outputs = []
    if settings.bound_kind not in ("dt", "rate", "limit"):
        raise ConfigError(f"unknown bound kind {settings.bound_kind!r}")
    if settings.bound_kind == "dt":
        if settings.bound_k < 1 or settings.bound_n < 1:
            raise ConfigError("dt bound needs [bound] k >= 1 and n >= 1")
        if not settings.ebn0_grid:
            raise ConfigError("need [channel] ebn0_db grid")
        results = []
        for eb in settings.ebn0_grid:
            r = bounds_mod.dt_bound(settings.mode, settings.field.m,
                                    settings.bound_k, settings.bound_n, eb,
                                    sigma_delta_deg=settings.sigma_delta_deg,
                                    samples=settings.bound_samples,
                                    seed=settings.seed, workers=args.workers,
                                    det_cfg=settings.detector)
            results.append(r)
            print(f"  {eb:6.2f} dB  dt {r.bound:.3e}", flush=True)
        path = out / "dt_bound.csv"
        bounds_mod.save_dt_csv(results, path)
        outputs.append(str(path))
    elif settings.bound_kind == "rate":
        if not settings.ebn0_grid:
            raise ConfigError("need [channel] ebn0_db grid")
        if not 0.0 < settings.bound_rate < 1.0:
            raise ConfigError("need [bound] target_rate in (0,1)")
        points = []
        for eb in settings.ebn0_grid:
            rate, se = bounds_mod.information_rate(
                settings.mode, settings.field.m, settings.bound_rate, eb,
                sigma_delta_deg=settings.sigma_delta_deg,
                n_probe=settings.bound_nprobe, blocks=settings.bound_blocks,
                seed=settings.seed, det_cfg=settings.detector,
                workers=args.workers)
            points.append((eb, rate, se))
            print(f"  {eb:6.2f} dB  {rate:.4f} bits/use", flush=True)
        path = out / "info_rate.csv"
        bounds_mod.save_rate_csv(points, path)
        outputs.append(str(path))
    else:
        if not 0.0 < settings.bound_rate < 1.0:
            raise ConfigError("need [bound] target_rate in (0,1)")
        limit = bounds_mod.shannon_limit_db(
            settings.mode, settings.field.m, settings.bound_rate,
            sigma_delta_deg=settings.sigma_delta_deg,
            n_probe=settings.bound_nprobe, blocks=settings.bound_blocks,
            seed=settings.seed, det_cfg=settings.detector, workers=args.workers)
        path = out / "limit.json"
        path.write_text(json.dumps({"mode": settings.mode,
                                    "target_rate": settings.bound_rate,
                                    "limit_db": limit}, indent=2))
        print(f"limit {limit:.3f} dB")
        outputs.append(str(path))
    (out / "manifest.json").write_text(
        json.dumps(_manifest(settings, args, started, outputs), indent=2))
    return EXIT_OK


def bundled_recipe(name: str) -> str:
    """Text of a packaged recipe config, by bare name (no extension)."""
    return (resources.files("nbdpsk") / "recipes" / f"{name}.cfg").read_text()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="nbdpsk",
        description="Non-binary LDPC coded DPSK over phase-noise channels")
    ap.add_argument("--config", required=True,
                    help="config file path, or recipe:<name> for a bundled one")
    ap.add_argument("--seed", type=int, default=None, help="override [montecarlo] seed")
    ap.add_argument("--workers", type=int, default=None,
                    help=f"worker processes (default {default_workers()})")
    ap.add_argument("--out-dir", default="out", help="output directory")
    ap.add_argument("--dry-run", action="store_true",
                    help="print the resolved configuration and exit")
    args = ap.parse_args(argv)

    parser = configparser.ConfigParser()
    if str(args.config).startswith("recipe:"):
        parser.read_string(bundled_recipe(str(args.config)[len("recipe:"):]))
    else:
        if not Path(args.config).exists():
            print(f"config file not found: {args.config}", file=sys.stderr)
            return EXIT_CONFIG
        parser.read(args.config)

    try:
        overrides = {} if args.seed is None else {"seed": args.seed}
        settings = RunSettings(parser, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.dry_run:
        resolved = {k: v for k, v in vars(settings).items()
                    if k not in ("field", "mapping") and not k.startswith("_")}
        print(json.dumps(resolved, indent=2, default=str))
        return EXIT_OK

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    handler = {"simulate": cmd_simulate, "threshold": cmd_threshold,
               "design": cmd_design, "codegen": cmd_codegen,
               "bound": cmd_bound}[settings.command]
    try:
        return handler(settings, args, out, started)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExhaustedWithReport as exc:
        (out / "step2.json").write_text(json.dumps(
            {"ranking": exc.report.ranking, "selected": None,
             "trail": exc.report.trail}, indent=2))
        print(f"non-convergent: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENT
    except (NonConvergent, Exhausted) as exc:
        print(f"non-convergent: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENT


if __name__ == "__main__":
    sys.exit(main())
