"""Per-pixel stepping kernel.

Rows are independent given the scene, so each row is advanced through the
whole chunk before moving to the next; this keeps a row's state in cache.
In event mode the kernel can stop at a step boundary when the output
buffer is close to full and be resumed from ``(y, k)``.
"""
import math

import numpy as np
from numba import njit

MODE_COUNT = 0
MODE_EVENTS = 1

# three-term log1p series is exact to double precision below this
_Z_FAST = 5e-4


@njit(cache=True, nogil=True)
def run_rows(
    y0, k0, nsteps, t_first, dt,
    region_id, vbg, ln_af, eps_af, af, eps,
    has_target, ox, oy, spr_lnr, spr_invr, spr_mask,
    alpha, hp_on, hp_gain, th_on, th_off, t_refr,
    lp, hp, sref, last_t,
    noise_ptr, noise_step, noise_x, noise_off, noise_u, keep_on, keep_off,
    mode, frame_t0, frame_us, on_counts, off_counts,
    ev_t, ev_x, ev_y, ev_p, n_ev,
):
    H, W = lp.shape
    sh, sw = spr_mask.shape
    cap = ev_t.shape[0]
    vrow = np.empty(W)
    drow = np.empty(W)
    nwords = (W + 7) // 8
    mrow = np.zeros(nwords * 8, dtype=np.uint8)
    mwords = mrow.view(np.uint64)
    single_region = vbg.shape[1] == 1
    counting = mode == MODE_COUNT
    nframes = on_counts.shape[0]
    for y in range(y0, H):
        kstart = k0 if y == y0 else 0
        p = noise_ptr[y]
        pend = noise_ptr[y + 1]
        while p < pend and noise_step[p] < kstart:
            p += 1
        lp_r = lp[y]
        hp_r = hp[y]
        sref_r = sref[y]
        last_r = last_t[y]
        ton_r = th_on[y]
        toff_r = th_off[y]
        rid_r = region_id[y]
        for k in range(kstart, nsteps):
            if mode == MODE_EVENTS and cap - n_ev < 2 * W:
                return y, k, n_ev
            t = t_first + k * dt
            f = (t - frame_t0) // frame_us
            f_ok = f >= 0 and f < nframes
            # luminance for this row
            if single_region:
                vb = vbg[k, 0]
                for x in range(W):
                    vrow[x] = vb
            else:
                for x in range(W):
                    vrow[x] = vbg[k, rid_r[x]]
            sy = y - oy[k]
            if has_target and sy >= 0 and sy < sh:
                sx0 = ox[k]
                for sx in range(max(0, -sx0), min(sw, W - sx0)):
                    if spr_mask[sy, sx]:
                        x = sx + sx0
                        r = rid_r[x]
                        z = eps_af[k, r] * spr_invr[sy, sx]
                        if z <= _Z_FAST:
                            # log1p series; truncation below half an ulp
                            vrow[x] = ln_af[k, r] + spr_lnr[sy, sx] + z * (1.0 - z * (0.5 - z * (1.0 / 3.0)))
                        else:
                            vrow[x] = math.log(af[k, r] / spr_invr[sy, sx] + eps)
            # filters (branch-free, vectorizable)
            hit = 0
            if hp_on:
                for x in range(W):
                    v = vrow[x]
                    l = v + alpha * (lp_r[x] - v)
                    lp_r[x] = l
                    b = hp_r[x] + hp_gain * (l - hp_r[x])
                    hp_r[x] = b
                    d = l - b - sref_r[x]
                    drow[x] = d
                    m = np.uint8((d > ton_r[x]) | (-d > toff_r[x]))
                    mrow[x] = m
                    hit |= m
            else:
                for x in range(W):
                    v = vrow[x]
                    l = v + alpha * (lp_r[x] - v)
                    lp_r[x] = l
                    d = l - hp_r[x] - sref_r[x]
                    drow[x] = d
                    m = np.uint8((d > ton_r[x]) | (-d > toff_r[x]))
                    mrow[x] = m
                    hit |= m
            if hit:
                # skip eight quiet pixels at a time
                for w in range(nwords):
                    if mwords[w] == 0:
                        continue
                    for x in range(w * 8, min(w * 8 + 8, W)):
                        if mrow[x] == 0:
                            continue
                        d = drow[x]
                        pol = -1
                        if d > ton_r[x]:
                            pol = 1
                        elif -d > toff_r[x]:
                            pol = 0
                        if pol >= 0 and t - last_r[x] >= t_refr:
                            sref_r[x] = lp_r[x] - hp_r[x]
                            last_r[x] = t
                            # emission is written out inline: a helper call costs
                            # an array refcount round-trip per argument
                            if counting:
                                if f_ok:
                                    if pol == 1:
                                        on_counts[f, y, x] += 1
                                    else:
                                        off_counts[f, y, x] += 1
                            else:
                                ev_t[n_ev] = t
                                ev_x[n_ev] = x
                                ev_y[n_ev] = y
                                ev_p[n_ev] = pol
                                n_ev += 1
            # background activity: gated by refractory, one event per pixel-step
            while p < pend and noise_step[p] == k:
                x = noise_x[p]
                off = noise_off[p]
                keep = keep_off if off else keep_on
                if noise_u[p] < keep and last_r[x] != t and t - last_r[x] >= t_refr:
                    last_r[x] = t
                    if counting:
                        if f_ok:
                            if off:
                                off_counts[f, y, x] += 1
                            else:
                                on_counts[f, y, x] += 1
                    else:
                        ev_t[n_ev] = t
                        ev_x[n_ev] = x
                        ev_y[n_ev] = y
                        ev_p[n_ev] = 0 if off else 1
                        n_ev += 1
                p += 1
    return H, 0, n_ev


@njit(cache=True, nogil=True)
def split_linear(lin, sps, W):
    """Sorted ``lin = (y * sps + step) * W + x`` back to ``(y, step, x)``."""
    n = lin.shape[0]
    y = np.empty(n, dtype=np.int64)
    step = np.empty(n, dtype=np.int64)
    x = np.empty(n, dtype=np.int64)
    cy = 0
    cs = 0
    base = 0
    for i in range(n):
        v = lin[i]
        while v >= base + W:
            base += W
            cs += 1
            if cs == sps:
                cs = 0
                cy += 1
        y[i] = cy
        step[i] = cs
        x[i] = v - base
    return y, step, x


def empty_counts():
    return np.zeros((0, 1, 1), dtype=np.int32)
