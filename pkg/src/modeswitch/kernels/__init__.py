"""Hot numeric kernels with a numba path and a pure-numpy path.

Both modules expose the same functions; ``BACKEND`` names the one bound
here. Pick numpy explicitly with ``MODESWITCH_NO_NUMBA=1``.
"""
from .. import _accel
from . import numpy_impl

if _accel.use_numba():
    from . import numba_impl as _impl
    BACKEND = "numba"
else:
    _impl = numpy_impl
    BACKEND = "numpy"

im2col = _impl.im2col
col2im = _impl.col2im
lstm_cell_forward = _impl.lstm_cell_forward
lstm_cell_backward = _impl.lstm_cell_backward
simulate_threshold_batch = _impl.simulate_threshold_batch


def implementations():
    """All importable backends by name, for cross-checks and benchmarks."""
    out = {"numpy": numpy_impl}
    if _accel.numba_available():
        from . import numba_impl
        out["numba"] = numba_impl
    return out


__all__ = ["BACKEND", "im2col", "col2im", "lstm_cell_forward", "lstm_cell_backward",
           "simulate_threshold_batch", "implementations"]
