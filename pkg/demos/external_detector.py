"""
Plugging in an external detector
================================

Any process that speaks the newline-JSON protocol can replace the built-in
proxy. The bundled echo stub answers every frame with fixed confidences.
"""
import sys

from autobias.controller import SimulatedCamera, run_loop
from autobias.detector import ExternalDetector, FallbackDetector
from autobias.scenario import scenario_from_dict

cfg = scenario_from_dict({
    "preset": "flicker-200",
    "scene": {"width": 48, "height": 36, "duration_s": 20,
              "target": {"semi_axes": [6, 8], "sway_amp_px": 4, "nod_amp_px": 4}},
    "controller": {"warmup_s": 2},
})

cmd = [sys.executable, "-m", "autobias.detector.echo_stub", "--conf-obj", "0.6", "--conf-face", "0.3"]
with ExternalDetector(cmd) as endpoint:
    det = FallbackDetector(endpoint)
    log = run_loop(SimulatedCamera(cfg.scene, det), cfg.duration_s, cfg.controller)

# a face confidence below 0.5 never counts as detected, so the loop keeps optimizing
print(f"{len(log.records)} s, {log.triggers} trigger(s), {log.evaluations} evaluations, {det.warnings} fallbacks")
print("the same run from the shell:")
print("  AUTOBIAS_DETECTOR_CMD='python3 -m autobias.detector.echo_stub' autobias run --preset flicker-200")
