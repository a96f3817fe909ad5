"""``ghostlab`` command-line entry point.

Subcommands write plain-text outputs plus a ``manifest_<command>.json`` into
``--out`` (default: ``$GHOSTLAB_OUT`` or the working directory). Exit codes:
0 on success, 2 for invalid input, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analytic, fileio, fitting, stats, timetags, wave
from .model import CoincidenceProfile, ConfigError, config_fingerprint, load_config, scan_positions

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_INVALID", "EXIT_NUMERICAL"]

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

# distinct streams for each noisy command so they never share draws
_NOISE_PURPOSE = {"scan": 1}


class _Run:
    """Bookkeeping shared by all subcommands: headers, outputs, manifest."""

    def __init__(self, args, cfg):
        self.args = args
        self.cfg = cfg
        self.fingerprint = config_fingerprint(cfg)
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs = []
        self.started = time.perf_counter()

    def header(self, **extra):
        h = {
            "tool": f"ghostlab {__version__}",
            "command": self.args.command,
            "fingerprint": self.fingerprint,
            "seed": self.args.seed,
        }
        if not self.args.reproducible:
            h["created"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        h.update(extra)
        return h

    def path(self, name):
        self.outputs.append(name)
        return self.out / name

    def finish(self, **summary):
        manifest = {
            "command": self.args.command,
            "fingerprint": self.fingerprint,
            "seed": self.args.seed,
            "outputs": self.outputs,
            "version": __version__,
            "summary": summary,
        }
        if not self.args.reproducible:
            manifest["wall_clock_s"] = round(time.perf_counter() - self.started, 3)
        name = f"manifest_{self.args.command}.json"
        text = json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n"
        (self.out / name).write_text(text)
        for key, value in summary.items():
            print(f"{key} = {value}")
        return EXIT_OK


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(type(value).__name__)


def _positions(args, cfg):
    lo = cfg.scan_min if args.x_min_um is None else args.x_min_um / 1e6
    hi = cfg.scan_max if args.x_max_um is None else args.x_max_um / 1e6
    step = cfg.scan_step if args.step_um is None else args.step_um / 1e6
    if not (step > 0 and lo < hi):
        raise ValueError("empty scan range: need x_min < x_max and step > 0")
    return scan_positions(cfg.replace(scan_min=lo, scan_max=hi, scan_step=step))


def cmd_analytic(args, cfg):
    run = _Run(args, cfg)
    x = _positions(args, cfg)
    y = analytic.ghost_pattern(x, analytic.params_from_config(cfg))
    fileio.write_profile_csv(run.path("analytic.csv"), CoincidenceProfile(x, y), run.header())
    return run.finish(rows=x.size, peak_position_um=float(x[np.argmax(y)] * 1e6))


def cmd_scan(args, cfg):
    run = _Run(args, cfg)
    x = _positions(args, cfg)
    quad = wave.Quadrature(cfg.n_source_modes, cfg.n_bucket_points)
    sim = wave.coincidence_profile(cfg, quadrature=quad, positions=x,
                                   pump_envelope=args.pump_envelope, workers=args.workers)
    singles = wave.singles_profile(cfg, positions=x)
    coinc = sim.coincidences
    acq = None
    if args.noise == "poisson":
        seq = np.random.SeedSequence([args.seed, _NOISE_PURPOSE["scan"]])
        rng = np.random.Generator(np.random.Philox(seq))
        acq = cfg.scan_acq_time
        coinc = rng.poisson(cfg.scan_peak_rate * acq * coinc).astype(float)
        singles = rng.poisson(cfg.scan_singles_rate * acq * singles).astype(float)
    profile = CoincidenceProfile(x, coinc, singles2=singles, acquisition_per_point=acq)
    fileio.write_profile_csv(run.path("scan.csv"), profile,
                             run.header(noise=args.noise,
                                        source_modes=sim.meta["n_source_modes_used"],
                                        bucket_points=cfg.n_bucket_points))
    freq = cfg.slit_separation_d / (cfg.lambda2 * cfg.focal_length_f)
    return run.finish(
        rows=x.size,
        coincidence_fringe_component=stats.fringe_component(profile, freq),
        singles_fringe_component=stats.fringe_component(profile, freq, "singles2"),
    )


def cmd_timetags(args, cfg):
    run = _Run(args, cfg)
    params = timetags.temporal_params_from_config(cfg, seed=args.seed)
    s1, s2 = timetags.generate(params, args.duration, workers=args.workers)
    header = run.header()
    fileio.write_tags(run.path("tags_ch1.tsv"), s1, header)
    fileio.write_tags(run.path("tags_ch2.tsv"), s2, header)
    return run.finish(events_ch1=len(s1), events_ch2=len(s2), duration_s=args.duration)


def cmd_analyze(args, cfg):
    run = _Run(args, cfg)
    tag_paths = args.tags or [Path(args.out) / "tags_ch1.tsv", Path(args.out) / "tags_ch2.tsv"]
    s1, _ = fileio.read_tags(tag_paths[0])
    s2, _ = fileio.read_tags(tag_paths[1])
    if s1.channel == 2 and s2.channel == 1:
        s1, s2 = s2, s1
    bin_width = args.bin_width_ns / 1e9
    half = args.lag_window_ns / 1e9
    report = stats.correlation_report(
        s1, s2, bin_width=bin_width,
        lag_range=(cfg.fiber_delay - half, cfg.fiber_delay + half),
        fiber_delay=cfg.fiber_delay, auto_bin_width=args.auto_bin_width_ns / 1e9,
    )
    values = {k: (repr(v) if isinstance(v, float) else v) for k, v in report.as_dict().items()}
    fileio.write_key_values(run.path("report.txt"), values, run.header())
    lags, g, g_err = stats.g2_cross(s1, s2, bin_width, (cfg.fiber_delay - half, cfg.fiber_delay + half))
    fileio.write_histogram_csv(run.path("histogram.csv"), lags, report.histogram.counts, g,
                               run.header(), g_err)
    return run.finish(R=report.R, R_err=report.R_err, verdict=report.verdict,
                      peak_lag_ns=report.peak_lag * 1e9, tau_c_ns=report.tau_c_est * 1e9)


def cmd_fit(args, cfg):
    run = _Run(args, cfg)
    profile, _ = fileio.read_profile_csv(args.profile)
    free = tuple(s.strip() for s in args.free.split(",") if s.strip())
    a = None if args.a_um is None else args.a_um / 1e6
    d = None if args.d_um is None else args.d_um / 1e6
    result = fitting.fit_profile(profile, cfg.lambda2, cfg.focal_length_f, a=a, d=d, free=free)
    p = result.params
    values = {}
    for name in fitting.FIT_PARAMETERS:
        values[name] = repr(getattr(p, name))
        values[f"{name}_err"] = repr(result.error(name)) if name in result.free else "fixed"
    values.update(
        fringe_period=repr(analytic.fringe_period(p)),
        envelope_zero=repr(analytic.envelope_zero(p)),
        residual_norm=repr(result.residual_norm),
        chi2_per_dof=repr(result.chi2_per_dof),
        iterations=result.iterations,
        converged=str(result.converged).lower(),
    )
    fileio.write_key_values(run.path("fit.txt"), values, run.header(profile=Path(args.profile).name))
    return run.finish(d_um=p.d * 1e6, a_um=p.a * 1e6, visibility=p.visibility,
                      converged=result.converged)


_COMMANDS = {
    "analytic": cmd_analytic,
    "scan": cmd_scan,
    "timetags": cmd_timetags,
    "analyze": cmd_analyze,
    "fit": cmd_fit,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="config file (key = value)")
    common.add_argument("--seed", type=int, default=0, help="64-bit RNG seed (default 0)")
    common.add_argument("--out", default=os.environ.get("GHOSTLAB_OUT", "."),
                        help="output directory (default $GHOSTLAB_OUT or .)")
    common.add_argument("--reproducible", action="store_true",
                        help="omit timestamps so reruns are byte-identical")

    parser = argparse.ArgumentParser(prog="ghostlab", description="Two-color ghost interference toolkit.")
    parser.add_argument("--version", action="version", version=f"ghostlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_range(p):
        p.add_argument("--x-min-um", type=float, help="first position (default scan_min)")
        p.add_argument("--x-max-um", type=float, help="last position (default scan_max)")
        p.add_argument("--step-um", type=float, help="position step (default scan_step)")

    p = sub.add_parser("analytic", parents=[common], help="closed-form pattern")
    add_range(p)
    p = sub.add_parser("scan", parents=[common], help="wave-optics scan simulation")
    add_range(p)
    p.add_argument("--noise", choices=("off", "poisson"), default="off")
    p.add_argument("--pump-envelope", action="store_true",
                   help="weight the source plane by the pump-2 Gaussian")
    p.add_argument("--workers", type=int, default=1)
    p = sub.add_parser("timetags", parents=[common], help="simulate detection time tags")
    p.add_argument("--duration", type=float, default=10.0, help="run length in seconds")
    p.add_argument("--workers", type=int, default=1)
    p = sub.add_parser("analyze", parents=[common], help="correlation and Cauchy-Schwarz analysis")
    p.add_argument("tags", nargs="*", type=Path,
                   help="channel-1 and channel-2 tag files (default: the ones in --out)")
    p.add_argument("--bin-width-ns", type=float, default=2.0)
    p.add_argument("--lag-window-ns", type=float, default=100.0,
                   help="half-width of the cross-correlation window around fiber_delay")
    p.add_argument("--auto-bin-width-ns", type=float, default=1000.0)
    p = sub.add_parser("fit", parents=[common], help="fit a profile CSV")
    p.add_argument("profile", type=Path)
    p.add_argument("--free", default=",".join(fitting.FIT_PARAMETERS),
                   help="comma-separated free parameters")
    p.add_argument("--a-um", type=float, help="initial slit width (default: tries 0.25, 0.4 and 0.6 d)")
    p.add_argument("--d-um", type=float, help="initial separation (default: Fourier seed)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "analyze" and args.tags and len(args.tags) != 2:
        print("ghostlab: analyze takes exactly two tag files", file=sys.stderr)
        return EXIT_INVALID
    if not 0 <= args.seed < 2**64:
        print("ghostlab: seed must fit in 64 unsigned bits", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](args, cfg)
    except (wave.SamplingError, fitting.FitError, ZeroDivisionError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"ghostlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, fileio.FormatError, ValueError, OSError) as exc:
        print(f"ghostlab: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
