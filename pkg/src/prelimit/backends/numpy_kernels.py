"""Vectorized fallback kernels; the arithmetic mirrors the JIT path exactly.

Replications advance in lockstep: at step ``j`` every still-running
replication consumes column ``j`` of its random pools, accumulating in the
same order as the per-replication loops in the JIT kernels, so outputs are
bit-identical between backends.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"

_DONE = 0
_EXHAUSTED = 1
_OOB = 2


def pair_integral_batch(p_up, total_rate, k0, dh, pe, pu, integral, tau, steps, status):
    """Run the two-copy coupled queue until absorption for each replication.

    Accumulates the piecewise-constant integrand ``dh[state]`` between
    events (exactly), records the absorption time, and reports per-rep
    status: done, pool exhausted, or integrand index out of range.
    """
    n_rep, length = pe.shape
    x = np.full(n_rep, k0, dtype=np.int64)
    running = np.ones(n_rep, dtype=bool)
    t = np.zeros(n_rep)
    use_dh = dh.size > 0
    for j in range(length):
        if not running.any():
            break
        dt = pe[:, j] / total_rate
        if use_dh:
            oob = running & (x >= dh.size)
            if oob.any():
                status[oob] = _OOB
                running &= ~oob
            vals = dh[np.minimum(x, dh.size - 1)]
            integral[:] = np.where(running, integral + dt * vals, integral)
        t = np.where(running, t + dt, t)
        steps[:] = np.where(running, j + 1, steps)
        up = pu[:, j] < p_up
        service = running & ~up
        couple = service & (x == 0)
        tau[:] = np.where(couple, t, tau)
        status[couple] = _DONE
        x = np.where(running & up, x + 1, x)
        x = np.where(service & (x > 0), x - 1, x)
        running &= ~couple
    status[running] = _EXHAUSTED


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
    """Drive four reflected paths off one Brownian path and check the
    misalignment window.

    The shared free path is reflected through the running-minimum map, the
    third-difference combination is tracked between the two level crossings
    of the once-shifted path, and per-replication window diagnostics are
    written into the output arrays.
    """
    n_rep, n = dw.shape
    tgrid = dt * np.arange(1, n + 1)
    z = x0 + drift * tgrid[None, :] + sigma_dt * np.cumsum(dw, axis=1)
    m = np.minimum(np.minimum.accumulate(z, axis=1), x0)
    r0 = np.maximum(0.0, -m)
    r1 = np.maximum(0.0, -(eps + m))
    r2 = np.maximum(0.0, -(2.0 * eps + m))
    r3 = np.maximum(0.0, -(3.0 * eps + m))
    y0 = z + r0
    y1 = eps + z + r1
    y2 = 2.0 * eps + z + r2
    y3 = 3.0 * eps + z + r3
    d3 = y3 - 3.0 * y2 + 3.0 * y1 - y0

    hit1 = y1 <= g1_thresh
    hit2 = y1 <= g2_thresh
    some1 = hit1.any(axis=1)
    some2 = hit2.any(axis=1)
    i1 = np.argmax(hit1, axis=1)
    i2 = np.argmax(hit2, axis=1)
    observed[:] = some1 & some2
    idx = np.arange(n)[None, :]
    window = (idx >= i1[:, None]) & (idx <= i2[:, None]) & observed[:, None]
    ok[:] = ~np.any((d3 > d3_thresh) & window, axis=1)
    ok_strict[:] = ~np.any((d3 > d3_strict) & window, axis=1)
    r1_clean[:] = ~np.any((r1 != 0.0) & window, axis=1)
    ident_dev[:] = np.max(np.where(window, np.abs(d3 + r0), 0.0), axis=1)
    rows = np.arange(n_rep)
    s1[:] = np.where(observed, i1, 0)
    s2[:] = np.where(observed, i2, 0)
    r0_g1[:] = np.where(observed, r0[rows, i1], 0.0)
    r0_g2[:] = np.where(observed, r0[rows, i2], 0.0)
