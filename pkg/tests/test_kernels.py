import os
import subprocess
import sys

import numpy as np
import pytest

from modeswitch import env, kernels

impls = kernels.implementations()
needs_numba = pytest.mark.skipif("numba" not in impls, reason="numba not installed")


@needs_numba
def test_im2col_col2im_agree(rng):
    x = rng.standard_normal((3, 9, 4))
    a, b = impls["numpy"], impls["numba"]
    assert np.allclose(a.im2col(x, 3), b.im2col(x, 3))
    d = rng.standard_normal((3, 7, 12))
    assert np.allclose(a.col2im(d, 3, 4), b.col2im(d, 3, 4))


@needs_numba
def test_lstm_cells_agree(rng):
    z = rng.standard_normal((5, 16))
    c = rng.standard_normal((5, 4))
    fa = impls["numpy"].lstm_cell_forward(z, c)
    fb = impls["numba"].lstm_cell_forward(z, c)
    for u, v in zip(fa, fb):
        assert np.allclose(u, v, atol=1e-14)
    dh, dc = rng.standard_normal((5, 4)), rng.standard_normal((5, 4))
    i, f, g, o, _, tc, _ = fa
    ba = impls["numpy"].lstm_cell_backward(dh, dc, i, f, g, o, c, tc)
    bb = impls["numba"].lstm_cell_backward(dh, dc, i, f, g, o, c, tc)
    for u, v in zip(ba, bb):
        assert np.allclose(u, v, atol=1e-14)


@needs_numba
def test_threshold_kernels_agree(rng):
    cfg = env.EpisodeConfig(Z=20)
    tapes = env.make_tapes(rng, 400, cfg.Z)
    grid = np.arange(cfg.Z + 1) / cfg.Z
    eps_c = cfg.eps_c(grid) + 0.3 * (1 - grid)
    launch = np.clip(0.6 + grid, 0, 1)
    labels = rng.integers(0, 4, 400)
    th = rng.random(400)
    out = [m.simulate_threshold_batch(th, labels, tapes, eps_c, launch, 0.9, 0.05, 4)
           for m in (impls["numpy"], impls["numba"])]
    for u, v in zip(*out):
        assert np.array_equal(u, v)


def test_env_flag_selects_numpy():
    code = "from modeswitch import kernels; print(kernels.BACKEND)"
    envvars = dict(os.environ, MODESWITCH_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=envvars, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "numpy"
