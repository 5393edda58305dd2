"""
The autobias control loop
=========================

First against a synthetic plant whose efficacy is a smooth function of the
biases, then against the simulated camera on a shortened flicker preset.
"""
import math
import sys

import numpy as np

from autobias.controller import ControllerConfig, LoopPhase, SimulatedCamera, StubPlant, run_loop
from autobias.scenario import scenario_from_dict

# %%
# Synthetic plant: efficacy peaks at c. The loop monitors for the warmup,
# drops below the trigger, optimizes and settles near c.
c = np.array([30.0, 40.0, -10.0, 20.0, 50.0])
log = run_loop(StubPlant(lambda x: math.exp(-float(np.sum((x - c) ** 2)) / 500.0)), 200, ControllerConfig())
settled = next(r.t_s for r in log.records if r.phase is LoopPhase.SETTLED)
print(f"stub plant: first settled at t={settled} s; {log.triggers} trigger(s), {log.evaluations} evaluations in total, "
      f"final biases {log.final_biases.as_dict()}")

# %%
# Simulated camera on the 300 Hz preset, cut to 90 s so the demo stays short.
seconds = int(sys.argv[1]) if len(sys.argv) > 1 else 90
cfg = scenario_from_dict({"preset": "flicker-300", "scene": {"duration_s": seconds}})
cam = SimulatedCamera(cfg.scene, detector_cfg=cfg.detector)
log = run_loop(cam, cfg.duration_s, cfg.controller)
for r in log.records[::10]:
    print(f"t={r.t_s:3d} {r.phase.value:10s} efficacy {r.metric:.3f} events {r.events:8d} biases {r.biases.as_dict()}")
s = log.summary(cfg.controller.warmup_s)
print("warmup means", s["warmup_means"])
print("final means ", s["final_means"])
