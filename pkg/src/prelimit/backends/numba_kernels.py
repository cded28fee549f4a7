"""JIT kernels; per-replication loops matching the numpy fallback bit for bit."""

from __future__ import annotations

import numpy as np
from numba import njit, prange

BACKEND_NAME = "numba"

_DONE = 0
_EXHAUSTED = 1
_OOB = 2


@njit(parallel=True, cache=True)
def pair_integral_batch(p_up, total_rate, k0, dh, pe, pu, integral, tau, steps, status):
    n_rep, length = pe.shape
    use_dh = dh.size > 0
    for r in prange(n_rep):
        x = k0
        acc = 0.0
        t = 0.0
        st = _EXHAUSTED
        n = 0
        for j in range(length):
            dt = pe[r, j] / total_rate
            if use_dh:
                if x >= dh.size:
                    st = _OOB
                    break
                acc = acc + dt * dh[x]
            t = t + dt
            n = j + 1
            if pu[r, j] < p_up:
                x += 1
            else:
                if x == 0:
                    st = _DONE
                    tau[r] = t
                    break
                x -= 1
        integral[r] = acc
        steps[r] = n
        status[r] = st


@njit(parallel=True, cache=True)
def rbm_window_batch(
    eps,
    x0,
    drift,
    sigma_dt,
    dt,
    g1_thresh,
    g2_thresh,
    d3_thresh,
    d3_strict,
    dw,
    observed,
    ok,
    ok_strict,
    r1_clean,
    s1,
    s2,
    r0_g1,
    r0_g2,
    ident_dev,
):
    n_rep, n = dw.shape
    for r in prange(n_rep):
        cw = 0.0
        m = x0
        in_window = False
        done = False
        okr = True
        oks = True
        clean = True
        idev = 0.0
        i1 = 0
        i2 = 0
        for s in range(n):
            cw = cw + dw[r, s]
            t = dt * (s + 1.0)
            z = x0 + drift * t + sigma_dt * cw
            if z < m:
                m = z
            r0 = 0.0 if m >= 0.0 else -m
            r1 = 0.0 if (eps + m) >= 0.0 else -(eps + m)
            r2 = 0.0 if (2.0 * eps + m) >= 0.0 else -(2.0 * eps + m)
            r3 = 0.0 if (3.0 * eps + m) >= 0.0 else -(3.0 * eps + m)
            y0 = z + r0
            y1 = eps + z + r1
            y2 = 2.0 * eps + z + r2
            y3 = 3.0 * eps + z + r3
            d3 = y3 - 3.0 * y2 + 3.0 * y1 - y0
            if not in_window:
                if y1 <= g1_thresh:
                    in_window = True
                    i1 = s
                    r0_g1[r] = r0
            if in_window:
                if d3 > d3_thresh:
                    okr = False
                if d3 > d3_strict:
                    oks = False
                if r1 != 0.0:
                    clean = False
                dev = abs(d3 + r0)
                if dev > idev:
                    idev = dev
                if y1 <= g2_thresh:
                    done = True
                    i2 = s
                    r0_g2[r] = r0
                    break
        obs = in_window and done
        observed[r] = obs
        if obs:
            ok[r] = okr
            ok_strict[r] = oks
            r1_clean[r] = clean
            ident_dev[r] = idev
            s1[r] = i1
            s2[r] = i2
        else:
            ok[r] = True
            ok_strict[r] = True
            r1_clean[r] = True
            ident_dev[r] = 0.0
            s1[r] = 0
            s2[r] = 0
            r0_g1[r] = 0.0
            r0_g2[r] = 0.0
