"""Kernel backend selection.

The hot inner loops of the tensor engine (softmax, layer norm, GELU,
logsumexp, embedding scatter-add) exist in two interchangeable lanes:

* ``numba_ops`` — @njit-compiled loops (the default when numba imports)
* ``numpy_ops`` — vectorized pure-numpy fallback

``DIMSCORE_BACKEND=numpy`` or ``DIMSCORE_BACKEND=numba`` forces a lane;
unset picks numba when available. Results agree between lanes to float64
rounding; within one lane they are bit-reproducible. The interpreter
must be restarted for a changed flag to take effect (selection happens
at import). ``benchmarks/bench_kernels.py`` compares the two lanes.
"""

import os

from ..errors import ConfigError

from . import numpy_ops

_requested = os.environ.get("DIMSCORE_BACKEND", "").strip().lower()

if _requested not in ("", "numpy", "numba"):
    raise ConfigError(
        f"DIMSCORE_BACKEND={_requested!r}: expected 'numpy' or 'numba'"
    )

if _requested == "numpy":
    _impl = numpy_ops
else:
    try:
        from . import numba_ops as _impl
    except ImportError:
        if _requested == "numba":
            raise ConfigError(
                "DIMSCORE_BACKEND=numba but numba is not importable"
            ) from None
        _impl = numpy_ops


def active_backend():
    """Name of the lane in use: 'numba' or 'numpy'."""
    return _impl.BACKEND_NAME


softmax_rows = _impl.softmax_rows
softmax_rows_grad = _impl.softmax_rows_grad
logsumexp_rows = _impl.logsumexp_rows
logsumexp_rows_grad = _impl.logsumexp_rows_grad
layer_norm_fwd = _impl.layer_norm_fwd
layer_norm_bwd = _impl.layer_norm_bwd
gelu_fwd = _impl.gelu_fwd
gelu_bwd = _impl.gelu_bwd
add_rows_at = _impl.add_rows_at
warmup = _impl.warmup
