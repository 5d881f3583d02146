"""numba versions of the kernels in :mod:`mmdfn.kernels.numpy_impl`.

Loop order mirrors the numpy reference; results agree to rounding, not bitwise.
"""
import math

import numpy as np
from numba import njit

NORM_FLOOR = 1e-12
_SIN_FLOOR = 1e-12


@njit(cache=True)
def _sigmoid(x):
    return 0.5 * (1.0 + math.tanh(0.5 * x))


@njit(cache=True)
def gru_forward(gi, w_hh, b_hh):
    steps = gi.shape[0]
    hidden = w_hh.shape[1]
    hs = np.zeros((steps, hidden))
    r = np.zeros((steps, hidden))
    z = np.zeros((steps, hidden))
    n = np.zeros((steps, hidden))
    ghn = np.zeros((steps, hidden))
    h = np.zeros(hidden)
    gh = np.zeros(3 * hidden)
    for t in range(steps):
        for row in range(3 * hidden):
            acc = b_hh[row]
            for col in range(hidden):
                acc += w_hh[row, col] * h[col]
            gh[row] = acc
        for j in range(hidden):
            rj = _sigmoid(gi[t, j] + gh[j])
            zj = _sigmoid(gi[t, hidden + j] + gh[hidden + j])
            nj = math.tanh(gi[t, 2 * hidden + j] + rj * gh[2 * hidden + j])
            r[t, j] = rj
            z[t, j] = zj
            n[t, j] = nj
            ghn[t, j] = gh[2 * hidden + j]
        for j in range(hidden):
            h[j] = (1.0 - z[t, j]) * n[t, j] + z[t, j] * h[j]
            hs[t, j] = h[j]
    return hs, r, z, n, ghn


@njit(cache=True)
def gru_backward(dhs, w_hh, hs, r, z, n, ghn):
    steps, hidden = hs.shape
    dgi = np.zeros((steps, 3 * hidden))
    dw_hh = np.zeros_like(w_hh)
    db_hh = np.zeros(3 * hidden)
    dh_next = np.zeros(hidden)
    dh = np.zeros(hidden)
    dgh = np.zeros(3 * hidden)
    h_prev = np.zeros(hidden)
    for t in range(steps - 1, -1, -1):
        for j in range(hidden):
            h_prev[j] = hs[t - 1, j] if t > 0 else 0.0
            dh[j] = dhs[t, j] + dh_next[j]
        for j in range(hidden):
            dn_pre = dh[j] * (1.0 - z[t, j]) * (1.0 - n[t, j] * n[t, j])
            dz_pre = dh[j] * (h_prev[j] - n[t, j]) * z[t, j] * (1.0 - z[t, j])
            dr_pre = dn_pre * ghn[t, j] * r[t, j] * (1.0 - r[t, j])
            dgh[j] = dr_pre
            dgh[hidden + j] = dz_pre
            dgh[2 * hidden + j] = dn_pre * r[t, j]
            dgi[t, j] = dr_pre
            dgi[t, hidden + j] = dz_pre
            dgi[t, 2 * hidden + j] = dn_pre
        for row in range(3 * hidden):
            db_hh[row] += dgh[row]
            for col in range(hidden):
                dw_hh[row, col] += dgh[row] * h_prev[col]
        for col in range(hidden):
            acc = dh[col] * z[t, col]
            for row in range(3 * hidden):
                acc += w_hh[row, col] * dgh[row]
            dh_next[col] = acc
    return dgi, dw_hh, db_hh


@njit(cache=True)
def _unit_rows(x):
    rows, width = x.shape
    unit = np.zeros_like(x)
    norms = np.zeros(rows)
    for i in range(rows):
        acc = 0.0
        for k in range(width):
            acc += x[i, k] * x[i, k]
        norms[i] = math.sqrt(acc)
        if norms[i] >= NORM_FLOOR:
            for k in range(width):
                unit[i, k] = x[i, k] / norms[i]
    return unit, norms


@njit(cache=True)
def angular_adjacency_forward(x, mask):
    rows, width = x.shape
    unit, norms = _unit_rows(x)
    adj = np.zeros((rows, rows))
    theta = np.zeros((rows, rows))
    for i in range(rows):
        for j in range(i, rows):
            if norms[i] < NORM_FLOOR or norms[j] < NORM_FLOOR:
                angle = 0.5 * math.pi
            else:
                diff = 0.0
                summ = 0.0
                for k in range(width):
                    dk = unit[i, k] - unit[j, k]
                    sk = unit[i, k] + unit[j, k]
                    diff += dk * dk
                    summ += sk * sk
                angle = 2.0 * math.atan2(math.sqrt(diff), math.sqrt(summ))
            theta[i, j] = angle
            theta[j, i] = angle
            w = 1.0 - angle / math.pi
            if mask[i, j]:
                adj[i, j] = w
            if mask[j, i]:
                adj[j, i] = w
    return adj, theta


@njit(cache=True)
def angular_adjacency_backward(dadj, x, mask, theta):
    rows, width = x.shape
    unit, norms = _unit_rows(x)
    dunit = np.zeros_like(x)
    for i in range(rows):
        if norms[i] < NORM_FLOOR:
            continue
        for j in range(rows):
            if not mask[i, j] or norms[j] < NORM_FLOOR:
                continue
            sin = math.sin(theta[i, j])
            if sin <= _SIN_FLOOR:
                continue
            dc = dadj[i, j] / (math.pi * sin)
            for k in range(width):
                dunit[i, k] += dc * unit[j, k]
                dunit[j, k] += dc * unit[i, k]
    dx = np.zeros_like(x)
    for i in range(rows):
        if norms[i] < NORM_FLOOR:
            continue
        radial = 0.0
        for k in range(width):
            radial += dunit[i, k] * unit[i, k]
        for k in range(width):
            dx[i, k] = (dunit[i, k] - unit[i, k] * radial) / norms[i]
    return dx
