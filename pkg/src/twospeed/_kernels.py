"""Compiled inner loop of the coupled solver.

The loop mirrors the array code in :mod:`twospeed.system` operation by
operation, so both engines produce identical samples.  Only cells that can
be nonzero are touched: the leapfrog stencil reaches one cell per step, so
the working window grows by exactly one cell on each side per step.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _d2(u, i, n):
    if i == 0:
        return u[1] - 3.0 * u[0]
    if i == n - 1:
        return u[n - 2] - 3.0 * u[n - 1]
    return u[i + 1] + u[i - 1] - 2.0 * u[i]


@njit(cache=True)
def _grad(u, i, n, dx):
    if i == 0:
        return (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dx)
    if i == n - 1:
        return (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * dx)
    return (u[i + 1] - u[i - 1]) / (2.0 * dx)


@njit(cache=True)
def coupled_loop(V_prev, V_curr, W_prev, W_curr, x, dt, dx, c, nsteps, stride, threshold,
                 centered, nonlinear, lo, hi, Vs, Ws, FV, FW, hist):
    """Advance from level 1 to ``nsteps``; returns ``(bad_level or -1, last_stored)``.

    ``[lo, hi)`` bounds the nonzero cells of levels 0 and 1.  ``Vs``, ``Ws``,
    ``FV``, ``FW`` must be zero-initialised.
    """
    n_x = x.size
    l1 = (dt / dx) ** 2
    lc = (c * dt / dx) ** 2
    V_next = np.zeros(n_x)
    W_next = np.zeros(n_x)
    last = 0
    for n in range(1, nsteps + 1):
        lo = max(lo - 1, 0)
        hi = min(hi + 1, n_x)
        final = n == nsteps
        amp = 0.0
        bad = False
        store = n % stride == 0
        k = n // stride
        for i in range(lo, hi):
            vc = V_curr[i]
            vp = V_prev[i]
            wc = W_curr[i]
            if final:
                vt = (vc - vp) / dt
            elif centered and nonlinear:
                base = 2.0 * vc - vp + l1 * _d2(V_curr, i, n_x)
                a = dt * wc / (2.0 * x[i])
                if a >= 1.0:
                    V_next[i] = math.inf
                else:
                    V_next[i] = (base - a * vp) / (1.0 - a)
                vt = (V_next[i] - vp) / (2.0 * dt)
            else:
                V_next[i] = 2.0 * vc - vp + l1 * _d2(V_curr, i, n_x)
                vt = (vc - vp) / dt
            if nonlinear:
                fv = wc * vt / x[i]
                fw = vt * vt / x[i]
            else:
                fv = 0.0
                fw = 0.0
            if (not final) and (not centered) and nonlinear:
                V_next[i] = V_next[i] + dt * dt * fv
            wt = (wc - W_prev[i]) / dt
            vx = _grad(V_curr, i, n_x, dx)
            wx = _grad(W_curr, i, n_x, dx)
            ev = math.sqrt(0.5 * (vt * vt + vx * vx))
            ew = math.sqrt(0.5 * (wt * wt + wx * wx))
            m = max(abs(vc), abs(wc), ev, ew)
            if not (m <= amp):
                amp = m
                if not math.isfinite(m):
                    bad = True
            if store:
                FV[k, i] = fv
                FW[k, i] = fw
            if not final:
                W_next[i] = 2.0 * wc - W_prev[i] + lc * _d2(W_curr, i, n_x) + dt * dt * fw
        hist[n] = amp
        if bad or not math.isfinite(amp) or amp > threshold:
            if store:
                for i in range(lo, hi):
                    FV[k, i] = 0.0
                    FW[k, i] = 0.0
            return n, last
        if store:
            last = k
            for i in range(lo, hi):
                Vs[k, i] = V_curr[i]
                Ws[k, i] = W_curr[i]
        if final:
            break
        V_prev, V_curr, V_next = V_curr, V_next, V_prev
        W_prev, W_curr, W_next = W_curr, W_next, W_prev
    return -1, last
