"""
Calibration sweep behind the flicker presets
============================================

Runs every preset over several seeds, optionally with a different flicker
depth, and prints the final-bias report with warmup and final efficacy.
The frozen presets were chosen so that default biases fail in warmup and
the loop recovers; this script checks that on any machine.

    python3 demos/calibration_sweep.py --seeds 0 1 2 --jobs 4
    python3 demos/calibration_sweep.py --depth 0.8 --duration 60
"""
import argparse
import os
import time
from dataclasses import replace
from pathlib import Path

from autobias.cli import _run_job, format_report
from autobias.scenario import preset, preset_names

ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
ap.add_argument("--presets", nargs="+", default=preset_names(), choices=preset_names())
ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
ap.add_argument("--depth", type=float, help="override the flicker depth of every preset")
ap.add_argument("--duration", type=int, help="shorten the runs (seconds)")
ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
ap.add_argument("--out", type=Path, default=Path("calibration"))
args = ap.parse_args()

jobs = []
for name in args.presets:
    for seed in args.seeds:
        cfg = preset(name).with_seed(seed)
        if args.depth is not None:
            flicker = tuple(replace(f, depth=args.depth) for f in cfg.scene.flicker)
            cfg = replace(cfg, scene=replace(cfg.scene, flicker=flicker))
        if args.duration is not None:
            cfg = replace(cfg, scene=replace(cfg.scene, duration_s=args.duration))
        jobs.append((cfg, args.out / f"{name}-s{seed}", None))

# %%
t0 = time.perf_counter()
if args.jobs > 1:
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(args.jobs) as pool:
        summaries = list(pool.map(_run_job, jobs))
else:
    summaries = [_run_job(j) for j in jobs]
print(f"{len(jobs)} runs in {time.perf_counter() - t0:.0f} s")

# %%
print(format_report(summaries))
print()
for s in summaries:
    w, f = s["warmup_means"]["efficacy"], s["final_means"]["efficacy"]
    print(f"{s['scenario']} seed {s['seed']}: warmup efficacy {w:.2f}, final {f:.2f}, "
          f"{s['triggers']} trigger(s), {s['evaluations']} evaluations")
