"""Command-line front end.

Verbs: ``run`` (closed loop), ``sim`` (open-loop event stream), ``report``
(final-bias table from summaries) and ``convert`` (EVT-CSV <-> EVT-BIN).
Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from .controller import SimulatedCamera, run_loop
from .detector import ENV_VAR, ExternalDetector, FallbackDetector, ProtocolError
from .event_pipeline import accumulate_frames, write_pgm
from .evt_io import EventFileError, EventWriter, convert
from .scenario import ScenarioConfig, ScenarioError, load_scenario, preset
from .sensor import BIAS_NAMES, BiasVector, BoundsError, SceneError, SensorSimulator, map_bias_to_params

log = logging.getLogger("autobias")

RUN_COLUMNS = ("t_s", "phase", *BIAS_NAMES, "efficacy", "conf_obj", "conf_face", "events")
REPORT_ORDER = ("diff_off", "diff_on", "fo", "hpf", "refr")
CONFIG_ERRORS = (ScenarioError, SceneError, BoundsError, EventFileError)


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors: exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed {text} is not an unsigned 64-bit integer")
    return v


def _biases(text: str) -> BiasVector:
    try:
        return BiasVector.from_sequence(int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--biases expects five comma-separated integers: {exc}") from None


def _add_common(parser, suppress: bool) -> None:
    """Global flags; accepted before or after the verb.

    The copies on the verb parsers default to SUPPRESS so a flag given only
    before the verb is not reset by the verb parser.
    """
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=_u64, default=d(None), help="scene seed (overrides the scenario)")
    parser.add_argument("--out", type=Path, default=d(Path("results")), help="output directory")
    parser.add_argument("--fps", type=int, default=d(None), help="accumulation frames per second (default 8)")
    parser.add_argument("--format", choices=("csv", "bin"), default=d("csv"), help="event file format")
    parser.add_argument("-v", "--verbose", action="count", default=d(0))
    src = parser.add_mutually_exclusive_group()
    src.add_argument("--preset", action="append", default=d([]), help="flicker-100 ... flicker-500")
    src.add_argument("--scenario", action="append", default=d([]), type=Path, help="scenario JSON file")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _add_common(common, suppress=True)

    ap = _Parser(prog="autobias", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_common(ap, suppress=False)
    sub = ap.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    run = sub.add_parser("run", parents=[common], help="closed-loop autobias run")
    run.add_argument("--jobs", type=int, default=1, help="parallel runs when several scenarios are given")
    run.add_argument("--detector-cmd", default=None, help=f"external detector command (default ${ENV_VAR})")

    sim = sub.add_parser("sim", parents=[common], help="open-loop simulation with fixed biases")
    sim.add_argument("--biases", type=_biases, default=BiasVector(), help="diff_on,diff_off,fo,hpf,refr")
    sim.add_argument("--duration", type=float, default=None, help="seconds to simulate (default: scenario)")
    sim.add_argument("--export-pgm", action="store_true", help="also write accumulated frames as PGM")

    verbose = argparse.ArgumentParser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    rep = sub.add_parser("report", parents=[verbose], help="final-bias table from summary.json files")
    rep.add_argument("paths", nargs="+", type=Path, help="summary.json files or directories holding one")

    conv = sub.add_parser("convert", parents=[verbose], help="convert an event file; formats follow the extensions")
    conv.add_argument("src", type=Path)
    conv.add_argument("dst", type=Path)
    return ap


# -- helpers -----------------------------------------------------------------
def _scenarios(args) -> list[ScenarioConfig]:
    if args.preset and args.scenario:
        raise ConfigError("--preset and --scenario are mutually exclusive")
    if args.preset:
        cfgs = [preset(name) for name in args.preset]
    elif args.scenario:
        cfgs = [load_scenario(p) for p in args.scenario]
    else:
        raise ConfigError("one of --preset or --scenario is required")
    if args.seed is not None:
        cfgs = [c.with_seed(args.seed) for c in cfgs]
    if args.fps is not None:
        if args.fps < 1 or 1_000_000 % args.fps:
            raise ConfigError("--fps must be a positive divisor of 1000000")
        cfgs = [replace(c, output=replace(c.output, fps=args.fps)) for c in cfgs]
    return cfgs


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.6f}"


def _json_safe(obj):
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    return obj


def write_run_csv(path: Path, runlog) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(RUN_COLUMNS) + "\n")
        for r in runlog.records:
            b = r.biases
            row = [str(r.t_s), r.phase.value, *(str(getattr(b, n)) for n in BIAS_NAMES)]
            row += [_fmt(r.metric), _fmt(r.conf_obj), _fmt(r.conf_face), str(r.events)]
            fh.write(",".join(row) + "\n")


def build_summary(cfg: ScenarioConfig, runlog) -> dict:
    s = runlog.summary(cfg.controller.warmup_s, cfg.controller.final_window_s)
    return _json_safe({"scenario": cfg.name, "seed": cfg.scene.seed, **s})


def _make_detector(cmd):
    if not cmd:
        return None, None
    endpoint = ExternalDetector(cmd)
    return endpoint, FallbackDetector(endpoint)


def run_scenario(cfg: ScenarioConfig, out: Path, detector_cmd: str | None = None) -> dict:
    """Closed-loop run of one scenario; writes ``run.csv`` and ``summary.json`` into ``out``."""
    ctrl = replace(cfg.controller, fps=cfg.output.fps)
    endpoint, det = _make_detector(detector_cmd)
    try:
        cam = SimulatedCamera(
            cfg.scene, det, cfg.detector, ctrl.fps, cfg.mapping, cfg.bias_bounds, ctrl.confidence_aggregate
        )
        runlog = run_loop(cam, cfg.duration_s, ctrl, cfg.bias_bounds)
    finally:
        if endpoint is not None:
            endpoint.close()
    if det is not None and det.warnings:
        log.warning("%s: %d frames fell back to no detection", cfg.name, det.warnings)
    out.mkdir(parents=True, exist_ok=True)
    write_run_csv(out / "run.csv", runlog)
    summary = build_summary(cfg, runlog)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return summary


def _run_job(job):
    cfg, out, cmd = job
    return run_scenario(cfg, out, cmd)


# -- verbs ---------------------------------------------------------------------
def cmd_run(args) -> int:
    cfgs = _scenarios(args)
    cmd = args.detector_cmd or os.environ.get(ENV_VAR) or None
    if len(cfgs) == 1:
        jobs = [(cfgs[0], args.out, cmd)]
    else:
        jobs = [(c, args.out / f"{c.name}-s{c.scene.seed}", cmd) for c in cfgs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_run_job, jobs))
    else:
        summaries = [_run_job(j) for j in jobs]
    for (cfg, out, _), s in zip(jobs, summaries):
        fm = s["final_means"]
        print(f"{cfg.name} seed={cfg.scene.seed}: final efficacy {fm['efficacy']:.3f}, "
              f"biases {s['final_biases']}, triggers {s['triggers']} -> {out}")
    return 0


def cmd_sim(args) -> int:
    cfgs = _scenarios(args)
    if len(cfgs) != 1:
        raise ConfigError("sim takes exactly one scenario")
    cfg = cfgs[0]
    duration = cfg.scene.duration_s if args.duration is None else args.duration
    dt = cfg.scene.dt_us
    t_end = int(round(duration * 1e6))
    if t_end <= 0 or t_end % dt:
        raise ConfigError(f"--duration must be a positive multiple of dt ({dt} us)")
    params = map_bias_to_params(args.biases, cfg.mapping, cfg.bias_bounds)
    sim = SensorSimulator(cfg.scene)
    state = sim.init_state(0)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"events.{args.format}"
    frame_us = 1_000_000 // cfg.output.fps
    pgm_dir = args.out / "frames"
    export = args.export_pgm or cfg.output.export_pgm
    if export:
        pgm_dir.mkdir(exist_ok=True)
    with EventWriter(path) as w:
        t = 0
        while t < t_end:
            t1 = min(t_end, (t // 1_000_000 + 1) * 1_000_000)
            ev = sim.simulate_events(params, t, t1, state)
            w.write(ev)
            if export:
                _export_pgm(ev, t, t1, frame_us, cfg, pgm_dir)
            t = t1
    print(f"{w.count} events -> {path}")
    return 0


def _export_pgm(ev, t0, t1, frame_us, cfg, pgm_dir) -> None:
    """Frames of ``[t0, t1)`` as PGM files named by their global index."""
    local = ev.copy()
    local["t"] -= t0
    first = t0 // frame_us
    frames = accumulate_frames(local, 1_000_000 / frame_us, cfg.scene.width, cfg.scene.height, duration_us=t1 - t0)
    for fr in frames:
        write_pgm(fr, pgm_dir / f"frame_{first + fr.index:06d}.pgm")


def _load_summary(path: Path) -> dict:
    p = path / "summary.json" if path.is_dir() else path
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
        for key in ("scenario", "final_biases", "warmup_means", "final_means"):
            data[key]
        for n in REPORT_ORDER:
            int(data["final_biases"][n])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{p}: missing or corrupt summary ({exc.__class__.__name__}: {exc})") from None
    return data


def percent_change(before, after) -> str:
    """Signed percentage, e.g. ``+100%``; ``n/a`` when undefined."""
    if before is None or after is None:
        return "n/a"
    if before == 0:
        return "+0%" if after == 0 else ("+inf%" if after > 0 else "-inf%")
    return f"{100.0 * (after - before) / before:+.0f}%"


def format_report(summaries: list[dict]) -> str:
    head = ["scenario", "seed", *REPORT_ORDER, "d_conf_obj", "d_conf_face", "d_efficacy"]
    rows = []
    for s in summaries:
        w, f = s["warmup_means"], s["final_means"]
        rows.append(
            [str(s["scenario"]), str(s.get("seed", ""))]
            + [str(s["final_biases"][n]) for n in REPORT_ORDER]
            + [percent_change(w.get(k), f.get(k)) for k in ("conf_obj", "conf_face", "efficacy")]
        )
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
    line = lambda r: "  ".join(c.rjust(wd) for c, wd in zip(r, widths))  # noqa: E731
    return "\n".join([line(head)] + [line(r) for r in rows])


def _summary_paths(path: Path) -> list[Path]:
    """A summary file, a run directory, or a batch directory of run directories."""
    if path.is_dir() and not (path / "summary.json").exists():
        found = sorted(path.glob("*/summary.json"))
        if found:
            return found
    return [path]


def cmd_report(args) -> int:
    print(format_report([_load_summary(p) for path in args.paths for p in _summary_paths(path)]))
    return 0


def cmd_convert(args) -> int:
    n = convert(args.src, args.dst)
    print(f"{n} events: {args.src} -> {args.dst}")
    return 0


VERBS = {"run": cmd_run, "sim": cmd_sim, "report": cmd_report, "convert": cmd_convert}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return VERBS[args.verb](args)
    except (ConfigError, *CONFIG_ERRORS) as exc:
        print(f"autobias: config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"autobias: config error: {exc}", file=sys.stderr)
        return 1
    except (ProtocolError, RuntimeError, OSError, ValueError) as exc:
        print(f"autobias: runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
