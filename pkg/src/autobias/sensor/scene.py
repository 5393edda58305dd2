"""Scripted scenes: illumination timeline, flicker sources, moving face proxy, noise."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class SceneError(ValueError):
    """Invalid scene description; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class FlickerSource:
    freq_hz: float
    depth: float
    waveform: str = "square"
    region: tuple | None = None  # (x0, y0, x1, y1) half-open; None = whole frame
    phase: float = 0.0  # fraction of a cycle

    def factor(self, t_s: np.ndarray) -> np.ndarray:
        """Multiplicative illumination factor ``1 + depth * w(t)``."""
        # phase from whole microseconds: exact for integer frequencies, so
        # samples on a square-wave edge do not depend on rounding
        t_us = np.rint(np.asarray(t_s, dtype=float) * 1e6)
        cyc = np.mod(self.freq_hz * t_us, 1e6) / 1e6 + self.phase
        if self.waveform == "sine":
            w = np.sin(2.0 * np.pi * cyc)
        else:
            w = np.where(np.mod(cyc, 1.0) < 0.5, 1.0, -1.0)
        return 1.0 + self.depth * w


@dataclass(frozen=True)
class TargetSpec:
    """Elliptical face proxy with a seeded log-reflectance texture.

    The ellipse sways horizontally (``sway_amp_px``) and nods vertically
    (``nod_amp_px``, quarter-period out of phase) around ``center``.
    """

    semi_axes: tuple = (14.0, 18.0)
    contrast: float = 2.0
    texture_std: float = 0.0
    texture_corr_px: float = 1.5
    center: tuple | None = None
    sway_amp_px: float = 0.0
    sway_period_s: float = 4.0
    nod_amp_px: float = 0.0
    jitter_px: float = 0.0

    @property
    def area(self) -> float:
        return math.pi * self.semi_axes[0] * self.semi_axes[1]


@dataclass(frozen=True)
class NoiseSpec:
    """Background activity.

    ``rate`` is events/pixel/s at ``ref_lux``; darker scenes multiply it by
    ``ref_lux / lux`` clamped to ``[1, max_gain]``. The two exponents make the
    rate follow the pixel bandwidth and thresholds; both default to 0.
    """

    rate: float = 0.0
    ref_lux: float = 200.0
    max_gain: float = 20.0
    off_fraction: float = 0.5
    bandwidth_exponent: float = 0.0
    threshold_exponent: float = 0.0
    ref_f_lp: float = 500.0
    ref_theta: float = 0.15
    cap: float = 1.0


@dataclass(frozen=True)
class SceneScript:
    width: int = 160
    height: int = 120
    dt_us: int = 200
    ambient: tuple = ((0.0, 150.0),)  # (start_s, lux), piecewise constant
    flicker: tuple = ()
    target: TargetSpec | None = None
    background_reflectance: float = 1.0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    threshold_mismatch: float = 0.0
    duration_s: float = 10.0
    seed: int = 0

    def __post_init__(self):
        self.validate()

    # -- validation -------------------------------------------------------
    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise SceneError("scene.width", "geometry must be at least 1x1")
        if self.width > 65535 or self.height > 65535:
            raise SceneError("scene.width", "geometry exceeds 16-bit coordinates")
        if self.dt_us < 1 or 1_000_000 % self.dt_us:
            raise SceneError("scene.dt_us", f"{self.dt_us} must be a positive divisor of 1000000")
        if not self.ambient:
            raise SceneError("scene.ambient", "timeline is empty")
        starts = [a[0] for a in self.ambient]
        if starts[0] != 0 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise SceneError("scene.ambient", "timeline must start at 0 and increase")
        if any(a[1] < 0 for a in self.ambient):
            raise SceneError("scene.ambient", "illuminance must be non-negative")
        for i, src in enumerate(self.flicker):
            name = f"scene.flicker[{i}]"
            if not 0.0 <= src.depth <= 1.0:
                raise SceneError(f"{name}.depth", f"{src.depth} not in [0, 1]")
            if src.waveform not in ("sine", "square"):
                raise SceneError(f"{name}.waveform", f"unknown waveform {src.waveform!r}")
            if src.freq_hz <= 0:
                raise SceneError(f"{name}.freq_hz", "frequency must be positive")
            if self.dt_us > 1e6 / (10.0 * src.freq_hz):
                raise SceneError(
                    "scene.dt_us",
                    f"{self.dt_us} us gives fewer than 10 samples per cycle at {src.freq_hz} Hz",
                )
            if src.region is not None:
                x0, y0, x1, y1 = src.region
                if not (0 <= x0 < x1 <= self.width and 0 <= y0 < y1 <= self.height):
                    raise SceneError(f"{name}.region", f"{src.region} outside the frame")
        if sum(1 for s in self.flicker if s.region is not None) > 8:
            raise SceneError("scene.flicker", "at most 8 regional sources")
        if self.background_reflectance <= 0:
            raise SceneError("scene.background_reflectance", "must be positive")
        if not 0.0 <= self.noise.off_fraction <= 1.0:
            raise SceneError("scene.noise.off_fraction", "must lie in [0, 1]")
        if self.noise.rate < 0 or self.noise.cap < 1 or self.noise.max_gain < 1:
            raise SceneError("scene.noise", "rate >= 0, cap >= 1 and max_gain >= 1 required")
        if self.threshold_mismatch < 0:
            raise SceneError("scene.threshold_mismatch", "must be non-negative")
        if self.duration_s <= 0:
            raise SceneError("scene.duration_s", "must be positive")
        if self.seed < 0:
            raise SceneError("scene.seed", "must be unsigned")
        if self.target is not None:
            self._validate_target()

    def _validate_target(self) -> None:
        tg = self.target
        a, b = tg.semi_axes
        if a <= 0 or b <= 0:
            raise SceneError("scene.target.semi_axes", "must be positive")
        if tg.contrast <= 0:
            raise SceneError("scene.target.contrast", "must be positive")
        cx, cy = self.target_center
        reach_x = math.ceil(a) + tg.sway_amp_px
        reach_y = math.ceil(b) + tg.nod_amp_px
        if cx - reach_x < 0 or cx + reach_x > self.width - 1 or cy - reach_y < 0 or cy + reach_y > self.height - 1:
            raise SceneError("scene.target", "trajectory leaves the frame")

    # -- derived quantities -------------------------------------------------
    @property
    def target_center(self) -> tuple:
        if self.target is None or self.target.center is None:
            return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)
        return tuple(self.target.center)

    @property
    def steps_per_second(self) -> int:
        return 1_000_000 // self.dt_us

    def ambient_at(self, t_s: np.ndarray) -> np.ndarray:
        starts = np.array([a[0] for a in self.ambient])
        lux = np.array([a[1] for a in self.ambient])
        return lux[np.searchsorted(starts, t_s, side="right") - 1]

    def noise_gain(self, lux: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            g = self.noise.ref_lux / np.asarray(lux, dtype=float)
        return np.clip(g, 1.0, self.noise.max_gain)

    def target_sprite(self):
        """Return ``(ln_r, inv_r, mask)`` arrays for the face proxy.

        The sprite is centred on its middle element; texture is deterministic
        in ``seed``.
        """
        tg = self.target
        a, b = tg.semi_axes
        ha, hb = math.ceil(a), math.ceil(b)
        yy, xx = np.mgrid[-hb : hb + 1, -ha : ha + 1]
        mask = (xx / a) ** 2 + (yy / b) ** 2 <= 1.0
        ln_r = np.full(mask.shape, math.log(self.background_reflectance * tg.contrast))
        if tg.texture_std > 0:
            rng = np.random.default_rng([self.seed, 0x7E47])
            tex = ndimage.gaussian_filter(rng.standard_normal(mask.shape), tg.texture_corr_px, mode="wrap")
            tex = (tex - tex.mean()) / tex.std()
            ln_r = ln_r + tg.texture_std * tex
        return ln_r, np.exp(-ln_r), mask

    def mismatch_gains(self):
        """Per-pixel multiplicative threshold gains (ON, OFF), median 1."""
        shape = (self.height, self.width)
        if self.threshold_mismatch == 0:
            return np.ones(shape), np.ones(shape)
        rng = np.random.default_rng([self.seed, 0x3157])
        z = rng.standard_normal((2,) + shape)
        return np.exp(self.threshold_mismatch * z[0]), np.exp(self.threshold_mismatch * z[1])

    def target_track(self, step0: int, nsteps: int):
        """Integer sprite offsets (column, row) for global steps ``step0 ..``.

        Jitter is drawn per absolute second so any partition of the timeline
        sees the same trajectory.
        """
        tg = self.target
        k = np.arange(step0, step0 + nsteps, dtype=np.int64)
        t_s = k * self.dt_us / 1e6
        cx0, cy0 = self.target_center
        w = 2.0 * np.pi / tg.sway_period_s
        cx = cx0 + tg.sway_amp_px * np.sin(w * t_s)
        cy = cy0 + tg.nod_amp_px * np.cos(w * t_s)
        if tg.jitter_px > 0 and nsteps:
            sps = self.steps_per_second
            jx = np.empty(nsteps)
            jy = np.empty(nsteps)
            for blk in range(step0 // sps, (step0 + nsteps - 1) // sps + 1):
                rng = np.random.default_rng([self.seed, 0x717, blk])
                j = rng.standard_normal((2, sps)) * tg.jitter_px
                lo = max(step0, blk * sps)
                hi = min(step0 + nsteps, (blk + 1) * sps)
                jx[lo - step0 : hi - step0] = j[0, lo - blk * sps : hi - blk * sps]
                jy[lo - step0 : hi - step0] = j[1, lo - blk * sps : hi - blk * sps]
            cx = cx + jx
            cy = cy + jy
        a, b = tg.semi_axes
        ha, hb = math.ceil(a), math.ceil(b)
        ox = np.clip(np.rint(cx), ha, self.width - 1 - ha).astype(np.int64) - ha
        oy = np.clip(np.rint(cy), hb, self.height - 1 - hb).astype(np.int64) - hb
        return ox, oy
