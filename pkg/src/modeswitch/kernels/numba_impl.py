"""numba-compiled kernels. Same contracts as :mod:`.numpy_impl`."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def im2col(x_pad, width):
    b, tp, c = x_pad.shape
    t = tp - width + 1
    out = np.empty((b, t, c * width))
    for bi in range(b):
        for ti in range(t):
            for ci in range(c):
                base = ci * width
                for j in range(width):
                    out[bi, ti, base + j] = x_pad[bi, ti + j, ci]
    return out


@njit(cache=True)
def col2im(dcols, width, channels):
    b, t, _ = dcols.shape
    out = np.zeros((b, t + width - 1, channels))
    for bi in range(b):
        for ti in range(t):
            for ci in range(channels):
                base = ci * width
                for j in range(width):
                    out[bi, ti + j, ci] += dcols[bi, ti, base + j]
    return out


@njit(cache=True, inline="always")
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    ex = math.exp(x)
    return ex / (1.0 + ex)


@njit(cache=True)
def lstm_cell_forward(z, c_prev):
    b, h = c_prev.shape
    i = np.empty((b, h))
    f = np.empty((b, h))
    g = np.empty((b, h))
    o = np.empty((b, h))
    c = np.empty((b, h))
    tc = np.empty((b, h))
    hh = np.empty((b, h))
    for r in range(b):
        for k in range(h):
            iv = _sigmoid(z[r, k])
            fv = _sigmoid(z[r, h + k])
            gv = math.tanh(z[r, 2 * h + k])
            ov = _sigmoid(z[r, 3 * h + k])
            cv = fv * c_prev[r, k] + iv * gv
            tv = math.tanh(cv)
            i[r, k] = iv
            f[r, k] = fv
            g[r, k] = gv
            o[r, k] = ov
            c[r, k] = cv
            tc[r, k] = tv
            hh[r, k] = ov * tv
    return i, f, g, o, c, tc, hh


@njit(cache=True)
def lstm_cell_backward(dh, dc, i, f, g, o, c_prev, tc):
    b, h = dh.shape
    dz = np.empty((b, 4 * h))
    dc_prev = np.empty((b, h))
    for r in range(b):
        for k in range(h):
            ov = o[r, k]
            tv = tc[r, k]
            iv = i[r, k]
            fv = f[r, k]
            gv = g[r, k]
            dct = dc[r, k] + dh[r, k] * ov * (1.0 - tv * tv)
            dz[r, k] = dct * gv * iv * (1.0 - iv)
            dz[r, h + k] = dct * c_prev[r, k] * fv * (1.0 - fv)
            dz[r, 2 * h + k] = dct * iv * (1.0 - gv * gv)
            dz[r, 3 * h + k] = dh[r, k] * tv * ov * (1.0 - ov)
            dc_prev[r, k] = dct * fv
    return dz, dc_prev


@njit(cache=True)
def simulate_threshold_batch(thresholds, labels, tapes, eps_c_at, launch_at,
                             persistence, detect_fail, n_classes):
    n_ep, zp1, _ = tapes.shape
    z = zp1 - 1
    d = np.zeros(n_ep, dtype=np.int64)
    n_auto = np.zeros(n_ep, dtype=np.int64)
    n_detect = np.zeros(n_ep, dtype=np.int64)
    first_switch = np.full(n_ep, -1, dtype=np.int64)
    failed_at = np.full(n_ep, -1, dtype=np.int64)
    for e in range(n_ep):
        fire = np.int64(math.ceil(thresholds[e] * z - 1e-9))
        label = labels[e]
        auto = False
        committed = 0
        argmax = 0
        latent = tapes[e, 0, 1]
        for t in range(z):
            if not auto and t >= fire:
                auto = True
                committed = argmax
                if first_switch[e] < 0:
                    first_switch[e] = t
                if tapes[e, t, 5] >= launch_at[t]:
                    failed_at[e] = t
                    break
            if auto:
                n_auto[e] += 1
            else:
                d[e] += 1
            tt = t + 1
            if tapes[e, tt, 0] < 1.0 - persistence:
                latent = tapes[e, tt, 1]
            if latent >= eps_c_at[tt]:
                argmax = label
            else:
                w = min(np.int64(tapes[e, tt, 2] * (n_classes - 1)), n_classes - 2)
                argmax = w + 1 if w >= label else w
            if tt < z and auto and argmax != committed and tapes[e, tt, 4] >= detect_fail:
                auto = False
                n_detect[e] += 1
    return d, n_auto, n_detect, first_switch, failed_at
