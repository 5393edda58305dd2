"""
The pixel model under flicker
=============================

A walk through the behavioural pixel: contrast thresholds, the low-pass
photoreceptor, and the refractory period, each shown on a small scene.
"""
import math

from autobias.sensor import FlickerSource, PixelParams, SceneScript, simulate_events

# %%
# A single pixel under 100 Hz sinusoidal flicker. With a fast photoreceptor
# the log signal swings by 2a per half-cycle, so a threshold of 0.15 yields
# between floor(2a / 0.15) - 1 and floor(2a / 0.15) crossings per half-cycle.
for a in (0.30, 0.40, 0.55):
    scene = SceneScript(width=1, height=1, dt_us=50, flicker=(FlickerSource(100.0, math.tanh(a), "sine"),))
    ev, _ = simulate_events(scene, PixelParams(0.15, 0.15, 10_000.0, 0.0, 0.0), 0, 1_000_000)
    on = int((ev["p"] == 1).sum())
    n = math.floor(2 * a / 0.15)
    print(f"log amplitude {a:.2f}: {on} ON and {ev.size - on} OFF events in 1 s "
          f"(about {100 * (n - 1)} to {100 * n} per polarity)")

# %%
# Lowering the photoreceptor cutoff attenuates the flicker before it reaches
# the comparator. A first-order filter at 50 Hz passes about a quarter of a
# 200 Hz ripple.
scene = SceneScript(width=16, height=12, dt_us=50, flicker=(FlickerSource(200.0, 0.5, "sine"),))
for f_lp in (4000.0, 1000.0, 200.0, 50.0):
    ev, _ = simulate_events(scene, PixelParams(0.15, 0.15, f_lp, 0.0, 0.0), 0, 1_000_000)
    gain = 1 / math.sqrt(1 + (200.0 / f_lp) ** 2)
    print(f"f_lp {f_lp:6.0f} Hz: gain {gain:.3f}, {ev.size:6d} events")

# %%
# The refractory period bounds the per-pixel event rate at 1 / t_refr. The
# 300 Hz square wave has an edge every 1.67 ms, so shorter periods do not bind.
scene = SceneScript(width=8, height=8, flicker=(FlickerSource(300.0, 0.8),))
for t_refr in (0.0, 1000.0, 2000.0, 5000.0):
    ev, _ = simulate_events(scene, PixelParams(0.05, 0.05, 4000.0, 0.0, t_refr), 0, 1_000_000)
    per_pixel = ev.size / 64
    print(f"t_refr {t_refr:5.0f} us: {per_pixel:6.1f} events per pixel per second")

# %%
# A static scene without noise produces no events at all.
ev, _ = simulate_events(SceneScript(width=32, height=24), PixelParams(0.15, 0.15, 500.0, 0.0, 0.0), 0, 1_000_000)
print("static scene events:", ev.size)
assert ev.size == 0
