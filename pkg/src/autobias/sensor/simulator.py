"""Behavioral event-camera simulation driven by a :class:`SceneScript`."""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, replace

import numpy as np

from . import _kernel
from .biases import PixelParams
from .scene import SceneScript

_GEOMETRIC_INVERSION_MAX = 0.333333333333333333333333

EPS_LUX = 1e-3
NEVER = -(1 << 62)

EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])


@dataclass
class PixelState:
    """Per-pixel filter memory.

    ``hp`` holds the slow baseline subtracted by the high-pass stage; it is
    frozen while the high-pass is disabled, so toggling the filter never
    produces a jump in ``lp - hp``.
    """

    lp: np.ndarray
    hp: np.ndarray
    s_ref: np.ndarray
    last_event_t: np.ndarray

    def copy(self) -> "PixelState":
        return PixelState(self.lp.copy(), self.hp.copy(), self.s_ref.copy(), self.last_event_t.copy())

    def equals(self, other: "PixelState") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("lp", "hp", "s_ref", "last_event_t")
        )


def empty_stream(n: int = 0) -> np.ndarray:
    return np.zeros(n, dtype=EVENT_DTYPE)


class SensorSimulator:
    """Precomputes scene-derived arrays and steps a :class:`PixelState`.

    One instance per scene; noise candidates are generated per absolute
    second and cached, so results do not depend on how a time span is
    partitioned into calls.
    """

    def __init__(self, scene: SceneScript, noise_cache: int = 4):
        self.scene = scene
        H, W = scene.height, scene.width
        regional = [s for s in scene.flicker if s.region is not None]
        rid = np.zeros((H, W), dtype=np.int64)
        for j, src in enumerate(regional):
            x0, y0, x1, y1 = src.region
            rid[y0:y1, x0:x1] |= 1 << j
        self._regional = regional
        self._global = [s for s in scene.flicker if s.region is None]
        self.region_id = rid
        self.n_regions = 1 << len(regional)
        self.lnr_bg = np.full((H, W), math.log(scene.background_reflectance))
        self.invr_bg = np.full((H, W), 1.0 / scene.background_reflectance)
        if scene.target is not None:
            self.spr_lnr, self.spr_invr, mask = scene.target_sprite()
            self.spr_mask = mask.astype(np.uint8)
        else:
            self.spr_lnr = np.zeros((1, 1))
            self.spr_invr = np.ones((1, 1))
            self.spr_mask = np.zeros((1, 1), dtype=np.uint8)
        self.gain_on, self.gain_off = scene.mismatch_gains()
        self._noise_blocks: OrderedDict = OrderedDict()
        self._noise_cache = noise_cache

    # -- scene sampling -----------------------------------------------------
    def _illumination(self, step0: int, nsteps: int):
        sc = self.scene
        t_s = (step0 + np.arange(nsteps, dtype=np.int64)) * sc.dt_us / 1e6
        base = sc.ambient_at(t_s).astype(float)
        for src in self._global:
            base = base * src.factor(t_s)
        af = np.empty((nsteps, self.n_regions))
        regional = [src.factor(t_s) for src in self._regional]
        for r in range(self.n_regions):
            col = base.copy()
            for j, fac in enumerate(regional):
                if r >> j & 1:
                    col *= fac
            af[:, r] = col
        with np.errstate(divide="ignore"):
            ln_af = np.log(af)
            eps_af = EPS_LUX / af
        vbg = np.log(af * self.scene.background_reflectance + EPS_LUX)
        return af, ln_af, eps_af, vbg

    def _track(self, step0: int, nsteps: int):
        if self.scene.target is None:
            z = np.zeros(nsteps, dtype=np.int64)
            return z, z
        return self.scene.target_track(step0, nsteps)

    def log_luminance(self, step: int) -> np.ndarray:
        """Exact ``ln(L + eps)`` field at a global step index."""
        af = self._illumination(step, 1)[0]
        refl = np.exp(self.lnr_bg)
        if self.scene.target is not None:
            ox, oy = self._track(step, 1)
            sh, sw = self.spr_mask.shape
            win = refl[oy[0] : oy[0] + sh, ox[0] : ox[0] + sw]
            m = self.spr_mask.astype(bool)
            win[m] = np.exp(self.spr_lnr)[m]
        return np.log(af[0][self.region_id] * refl + EPS_LUX)

    # -- background activity ------------------------------------------------
    def _noise_block(self, blk: int):
        """Noise candidates of absolute second ``blk``, ordered by (row, step, column).

        Candidates form a Bernoulli process over the linear index
        ``(y * sps + step) * W + x``, drawn as geometric gaps so they come out
        sorted. When the ambient level changes inside the block the process
        runs at the largest probability and is thinned per step.
        """
        if blk in self._noise_blocks:
            self._noise_blocks.move_to_end(blk)
            return self._noise_blocks[blk]
        sc = self.scene
        sps, W, H = sc.steps_per_second, sc.width, sc.height
        rng = np.random.default_rng([sc.seed, 0xB6, blk])
        t_s = blk + np.arange(sps) / sps
        lux = sc.ambient_at(t_s)
        rate = sc.noise.rate * sc.noise_gain(lux) * sc.noise.cap
        prob = np.minimum(1.0, rate * sc.dt_us * 1e-6)
        p_max = float(prob.max()) if sc.noise.rate > 0 else 0.0
        pop = H * sps * W
        if p_max > 0:
            parts = []
            pos = -1
            # geometric gaps by inversion of exponentials: what
            # Generator.geometric does below p = 1/3, minus the per-draw call
            inversion = p_max < _GEOMETRIC_INVERSION_MAX
            denom = -math.log1p(-p_max) if inversion else 0.0
            while True:
                n_draw = int(1.05 * (pop - pos) * p_max) + 64
                if inversion:
                    gaps = np.ceil(rng.standard_exponential(n_draw) / denom).astype(np.int64)
                else:
                    gaps = rng.geometric(p_max, n_draw)
                run = pos + np.cumsum(gaps)
                parts.append(run[run < pop])
                if run[-1] >= pop:
                    break
                pos = int(run[-1])
            lin = np.concatenate(parts)
        else:
            lin = np.zeros(0, dtype=np.int64)
        y, step, x = _kernel.split_linear(lin, sps, W)
        if p_max > 0 and prob.min() < p_max:
            keep = rng.random(lin.size) * p_max < prob[step]
            y, step, x = y[keep], step[keep], x[keep]
        u = rng.random(y.size)
        off = (rng.random(y.size) < sc.noise.off_fraction).astype(np.uint8)
        block = (y, step + blk * sps, x, off, u)
        self._noise_blocks[blk] = block
        if len(self._noise_blocks) > self._noise_cache:
            self._noise_blocks.popitem(last=False)
        return block

    def _noise_chunk(self, step0: int, nsteps: int):
        sps = self.scene.steps_per_second
        blk = step0 // sps
        if (step0 + nsteps - 1) // sps != blk:
            raise ValueError("noise chunks must not straddle a second boundary")
        y, step, x, off, u = self._noise_block(blk)
        if nsteps != sps:
            sel = (step >= step0) & (step < step0 + nsteps)
            y, step, x, off, u = y[sel], step[sel], x[sel], off[sel], u[sel]
        ptr = np.searchsorted(y, np.arange(self.scene.height + 1)).astype(np.int64)
        return ptr, step - step0, x, off, u

    def noise_keep(self, params: PixelParams):
        """Acceptance probabilities (ON, OFF) for cached noise candidates."""
        nz = self.scene.noise
        bw = (params.f_lp / nz.ref_f_lp) ** nz.bandwidth_exponent
        on = bw * (nz.ref_theta / params.theta_on) ** nz.threshold_exponent
        off = bw * (nz.ref_theta / params.theta_off) ** nz.threshold_exponent
        return min(on, nz.cap) / nz.cap, min(off, nz.cap) / nz.cap

    # -- stepping -------------------------------------------------------------
    def init_state(self, t_us: int = 0) -> PixelState:
        """Settled state: filters at the luminance present at ``t_us``.

        The high-pass baseline starts at that luminance too, so the signal
        ``lp - hp`` and the reference both start at zero.
        """
        sc = self.scene
        v = self.log_luminance(t_us // sc.dt_us)
        H, W = v.shape
        return PixelState(
            lp=v.copy(),
            hp=v.copy(),
            s_ref=np.zeros((H, W)),
            last_event_t=np.full((H, W), NEVER, dtype=np.int64),
        )

    def _check_span(self, t_start: int, t_end: int, state: PixelState):
        sc = self.scene
        if not t_start < t_end:
            raise ValueError(f"t_start {t_start} must precede t_end {t_end}")
        if t_start % sc.dt_us or t_end % sc.dt_us:
            raise ValueError(f"times must be multiples of dt={sc.dt_us} us")
        if state.lp.shape != (sc.height, sc.width):
            raise ValueError(f"state shape {state.lp.shape} does not match scene {(sc.height, sc.width)}")

    def _run(self, params, state, t_start, t_end, mode, frame_us=1, counts=None):
        sc = self.scene
        dt = sc.dt_us
        alpha = math.exp(-2.0 * math.pi * params.f_lp * dt * 1e-6)
        hp_on = params.f_hp > 0
        hp_gain = 1.0 - math.exp(-2.0 * math.pi * params.f_hp * dt * 1e-6)
        th_on = params.theta_on * self.gain_on
        th_off = params.theta_off * self.gain_off
        keep_on, keep_off = self.noise_keep(params)
        if counts is None:
            counts = (_kernel.empty_counts(), _kernel.empty_counts())
        chunks = []
        sps = sc.steps_per_second
        n_total = (t_end - t_start) // dt
        step = t_start // dt
        end_step = step + n_total
        while step < end_step:
            nsteps = int(min(end_step - step, sps - step % sps))
            af, ln_af, eps_af, vbg = self._illumination(step, nsteps)
            ox, oy = self._track(step, nsteps)
            nptr, nstep, nx, noff, nu = self._noise_chunk(step, nsteps)
            cap = 1 if mode == _kernel.MODE_COUNT else max(4 * sc.width, 4096)
            bufs = _alloc(cap)
            y, k, n = 0, 0, 0
            while True:
                y, k, n = _kernel.run_rows(
                    y, k, nsteps, step * dt, dt,
                    self.region_id, vbg, ln_af, eps_af, af, EPS_LUX,
                    sc.target is not None, ox, oy, self.spr_lnr, self.spr_invr, self.spr_mask,
                    alpha, hp_on, hp_gain, th_on, th_off, float(params.t_refr),
                    state.lp, state.hp, state.s_ref, state.last_event_t,
                    nptr, nstep, nx, noff, nu, keep_on, keep_off,
                    mode, t_start, frame_us, counts[0], counts[1],
                    *bufs, n,
                )
                if y >= sc.height:
                    break
                bufs = _grow(bufs, n)
            if mode == _kernel.MODE_EVENTS:
                chunks.append(tuple(b[:n] for b in bufs))
            step += nsteps
        return chunks

    def simulate_events(self, params: PixelParams, t_start: int, t_end: int, state: PixelState) -> np.ndarray:
        """Advance ``state`` over ``[t_start, t_end)`` µs and return the event stream.

        Events are ordered by time, then row, then column.
        """
        self._check_span(t_start, t_end, state)
        chunks = self._run(params, state, t_start, t_end, _kernel.MODE_EVENTS)
        parts = []
        for t, x, y, p in chunks:
            order = np.lexsort((x, y, t))
            ev = np.empty(t.size, dtype=EVENT_DTYPE)
            ev["t"] = t[order]
            ev["x"] = x[order]
            ev["y"] = y[order]
            ev["p"] = p[order]
            parts.append(ev)
        return np.concatenate(parts) if parts else empty_stream()

    def accumulate_counts(self, params: PixelParams, t_start: int, t_end: int, state: PixelState, frame_us: int):
        """Advance ``state`` and return per-frame ``(on_counts, off_counts)``.

        Equivalent to binning :meth:`simulate_events` into windows of
        ``frame_us`` starting at ``t_start``, without materializing events.
        """
        self._check_span(t_start, t_end, state)
        if frame_us <= 0 or (t_end - t_start) % frame_us:
            raise ValueError("span must be a whole number of frames")
        nf = (t_end - t_start) // frame_us
        shape = (nf, self.scene.height, self.scene.width)
        on = np.zeros(shape, dtype=np.int32)
        off = np.zeros(shape, dtype=np.int32)
        self._run(params, state, t_start, t_end, _kernel.MODE_COUNT, frame_us, (on, off))
        return on, off


def _alloc(cap):
    return (
        np.empty(cap, dtype=np.int64),
        np.empty(cap, dtype=np.int64),
        np.empty(cap, dtype=np.int64),
        np.empty(cap, dtype=np.int64),
    )


def _grow(bufs, n):
    new = _alloc(2 * bufs[0].size)
    for src, dst in zip(bufs, new):
        dst[:n] = src[:n]
    return new


def simulate_events(scene: SceneScript, params: PixelParams, t_start: int, t_end: int, state: PixelState | None = None):
    """Functional wrapper: returns ``(events, state)``; ``state`` is updated in place."""
    sim = SensorSimulator(scene)
    if state is None:
        state = sim.init_state(t_start)
    events = sim.simulate_events(params, t_start, t_end, state)
    return events, state


def apply_bias(state: PixelState, new_params: PixelParams) -> PixelState:
    """Hot-swap pixel parameters.

    Filter memory and reference levels carry over unchanged; the new
    parameters only affect subsequent steps, exactly like a register write on
    a live sensor. Parameters are passed to the next ``simulate_*`` call, so
    the state itself is returned as is.
    """
    return state


