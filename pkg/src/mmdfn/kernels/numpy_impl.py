"""Reference kernels in plain numpy.

Gate layout of every GRU projection is ``[reset, update, candidate]`` along the
3H axis, matching the cuDNN/PyTorch convention.
"""
import numpy as np

NORM_FLOOR = 1e-12
_SIN_FLOOR = 1e-12


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gru_forward(gi, w_hh, b_hh):
    """Run the recurrence over precomputed input projections ``gi`` (T x 3H)."""
    steps = gi.shape[0]
    hidden = w_hh.shape[1]
    hs = np.zeros((steps, hidden))
    r = np.zeros((steps, hidden))
    z = np.zeros((steps, hidden))
    n = np.zeros((steps, hidden))
    ghn = np.zeros((steps, hidden))
    h = np.zeros(hidden)
    for t in range(steps):
        gh = w_hh @ h + b_hh
        r[t] = _sigmoid(gi[t, :hidden] + gh[:hidden])
        z[t] = _sigmoid(gi[t, hidden:2 * hidden] + gh[hidden:2 * hidden])
        ghn[t] = gh[2 * hidden:]
        n[t] = np.tanh(gi[t, 2 * hidden:] + r[t] * ghn[t])
        h = (1.0 - z[t]) * n[t] + z[t] * h
        hs[t] = h
    return hs, r, z, n, ghn


def gru_backward(dhs, w_hh, hs, r, z, n, ghn):
    steps, hidden = hs.shape
    dgi = np.zeros((steps, 3 * hidden))
    dw_hh = np.zeros_like(w_hh)
    db_hh = np.zeros(3 * hidden)
    dh_next = np.zeros(hidden)
    for t in range(steps - 1, -1, -1):
        h_prev = hs[t - 1] if t > 0 else np.zeros(hidden)
        dh = dhs[t] + dh_next
        dn_pre = dh * (1.0 - z[t]) * (1.0 - n[t] * n[t])
        dz_pre = dh * (h_prev - n[t]) * z[t] * (1.0 - z[t])
        dr_pre = dn_pre * ghn[t] * r[t] * (1.0 - r[t])
        dgh = np.concatenate([dr_pre, dz_pre, dn_pre * r[t]])
        dgi[t] = np.concatenate([dr_pre, dz_pre, dn_pre])
        dw_hh += np.outer(dgh, h_prev)
        db_hh += dgh
        dh_next = dh * z[t] + w_hh.T @ dgh
    return dgi, dw_hh, db_hh


def _unit_rows(x):
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    ok = norms >= NORM_FLOOR
    safe = np.where(ok, norms, 1.0)
    unit = x / safe[:, None]
    unit[~ok] = 0.0
    return unit, ok, safe


def pairwise_angles(unit, ok, block=64):
    """Angle between unit rows via ``2 atan2(|u - v|, |u + v|)``.

    Same value as ``arccos(u . v)`` but accurate near 0 and pi. Pairs with a
    degenerate row get pi/2. Only the upper triangle is computed; the result
    is mirrored so it is exactly symmetric.
    """
    n = unit.shape[0]
    theta = np.empty((n, n))
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        diff = np.sqrt(((unit[lo:hi, None, :] - unit[None, :, :]) ** 2).sum(axis=2))
        summ = np.sqrt(((unit[lo:hi, None, :] + unit[None, :, :]) ** 2).sum(axis=2))
        theta[lo:hi] = 2.0 * np.arctan2(diff, summ)
    theta = np.triu(theta) + np.triu(theta, 1).T
    degenerate = ~ok[:, None] | ~ok[None, :]
    theta[degenerate] = 0.5 * np.pi
    return theta


def angular_adjacency_forward(x, mask):
    """Edge weights ``1 - angle(x_i, x_j)/pi`` on the masked pairs of rows of ``x``.

    Rows with norm below ``NORM_FLOOR`` count as orthogonal to everything
    (weight 0.5). Returns the weights and the angle matrix.
    """
    unit, ok, _ = _unit_rows(x)
    theta = pairwise_angles(unit, ok)
    adj = np.where(mask, 1.0 - theta / np.pi, 0.0)
    return adj, theta


def angular_adjacency_backward(dadj, x, mask, theta):
    unit, ok, safe = _unit_rows(x)
    sin = np.sin(theta)
    live = mask & (sin > _SIN_FLOOR) & ok[:, None] & ok[None, :]
    # d weight / d cos = 1 / (pi sin(theta))
    dcos = np.where(live, dadj / (np.pi * np.where(live, sin, 1.0)), 0.0)
    dunit = (dcos + dcos.T) @ unit
    radial = np.einsum("ij,ij->i", dunit, unit)
    dx = (dunit - unit * radial[:, None]) / safe[:, None]
    dx[~ok] = 0.0
    return dx
