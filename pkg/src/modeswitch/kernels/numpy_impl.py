"""Pure-numpy kernels. Reference path, and the fallback when numba is off."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x_pad, width):
    """(B, T+width-1, C) -> (B, T, C*width) with column order (channel, tap)."""
    win = sliding_window_view(x_pad, width, axis=1)  # (B, T, C, width)
    b, t, c, k = win.shape
    return np.ascontiguousarray(win).reshape(b, t, c * k)


def col2im(dcols, width, channels):
    """Adjoint of im2col: scatter-add (B, T, C*width) back to (B, T+width-1, C)."""
    b, t, _ = dcols.shape
    d4 = dcols.reshape(b, t, channels, width)
    out = np.zeros((b, t + width - 1, channels))
    for j in range(width):
        out[:, j:j + t, :] += d4[:, :, :, j]
    return out


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_cell_forward(z, c_prev):
    """Gate nonlinearities for pre-activations z = [i, f, g, o] of width 4H."""
    h = c_prev.shape[1]
    i = _sigmoid(z[:, :h])
    f = _sigmoid(z[:, h:2 * h])
    g = np.tanh(z[:, 2 * h:3 * h])
    o = _sigmoid(z[:, 3 * h:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    return i, f, g, o, c, tc, o * tc


def lstm_cell_backward(dh, dc, i, f, g, o, c_prev, tc):
    """Returns (dz, dc_prev) given upstream dh and dc flowing into this step."""
    dc_total = dc + dh * o * (1.0 - tc * tc)
    dz = np.empty((dh.shape[0], 4 * dh.shape[1]))
    h = dh.shape[1]
    dz[:, :h] = dc_total * g * i * (1.0 - i)
    dz[:, h:2 * h] = dc_total * c_prev * f * (1.0 - f)
    dz[:, 2 * h:3 * h] = dc_total * i * (1.0 - g * g)
    dz[:, 3 * h:] = dh * tc * o * (1.0 - o)
    return dz, dc_total * f


def simulate_threshold_batch(thresholds, labels, tapes, eps_c_at, launch_at,
                             persistence, detect_fail, n_classes):
    """Roll out scripted threshold policies, vectorised across episodes.

    Policy: from TELE, switch to AUTO as soon as T/Z >= threshold.
    tapes[e, 0] drives the reset, tapes[e, T] the transition into slot T;
    columns are (redraw, latent, wrong class, confidence, detection, launch).
    eps_c_at[T] / launch_at[T] are the curves evaluated at T/Z. An entry
    into AUTO at slot t fails when tapes[e, t, 5] >= launch_at[t]; the
    episode stops there.

    Returns (d, n_auto, n_detect, first_switch, failed_at) arrays;
    failed_at is -1 for episodes that ran to the end.
    """
    n_ep, zp1, _ = tapes.shape
    z = zp1 - 1
    auto = np.zeros(n_ep, dtype=bool)
    live = np.ones(n_ep, dtype=bool)
    committed = np.zeros(n_ep, dtype=np.int64)
    argmax = np.zeros(n_ep, dtype=np.int64)  # uniform estimate at T=0 -> class 0
    latent = tapes[:, 0, 1].copy()
    d = np.zeros(n_ep, dtype=np.int64)
    n_auto = np.zeros(n_ep, dtype=np.int64)
    n_detect = np.zeros(n_ep, dtype=np.int64)
    first_switch = np.full(n_ep, -1, dtype=np.int64)
    failed_at = np.full(n_ep, -1, dtype=np.int64)
    # integer slot at which each policy fires; guards float round-off in T/Z
    fire = np.ceil(thresholds * z - 1e-9).astype(np.int64)
    for t in range(z):
        go = live & (~auto) & (t >= fire)
        auto = auto | go
        committed = np.where(go, argmax, committed)
        first_switch = np.where(go & (first_switch < 0), t, first_switch)
        crash = go & (tapes[:, t, 5] >= launch_at[t])
        failed_at = np.where(crash, t, failed_at)
        live = live & ~crash
        d += live & ~auto
        n_auto += live & auto
        tt = t + 1
        tape = tapes[:, tt]
        redraw = tape[:, 0] < 1.0 - persistence
        latent = np.where(redraw, tape[:, 1], latent)
        correct = latent >= eps_c_at[tt]
        w = np.minimum((tape[:, 2] * (n_classes - 1)).astype(np.int64), n_classes - 2)
        wrong = np.where(w >= labels, w + 1, w)
        argmax = np.where(correct, labels, wrong)
        if tt < z:
            revert = live & auto & (argmax != committed) & (tape[:, 4] >= detect_fail)
            auto = auto & ~revert
            n_detect += revert
    return d, n_auto, n_detect, first_switch, failed_at
