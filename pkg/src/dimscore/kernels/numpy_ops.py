"""Pure-numpy reference lane for the hot kernels.

Every function here has a numba twin in `numba_ops` with the same
signature and semantics. This lane is always available and is the
ground truth the numba lane is tested against.

All inputs are float64 and C-contiguous; callers guarantee that.
"""

import numpy as np

BACKEND_NAME = "numpy"

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def softmax_rows(x):
    """Row-wise stable softmax of a 2-D array."""
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_grad(y, gy):
    """Backward of softmax_rows given its output y and upstream gy."""
    dot = (gy * y).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def logsumexp_rows(x):
    """Row-wise log(sum(exp(x))), max-shifted for stability."""
    m = x.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=1, keepdims=True))).ravel()


def logsumexp_rows_grad(x, lse, gy):
    return np.exp(x - lse[:, None]) * gy[:, None]


def layer_norm_fwd(x, gain, bias, eps):
    """Normalize each row to zero mean / unit variance, then affine.

    Returns (y, mu, rstd); mu and rstd are cached for the backward pass.
    """
    mu = x.mean(axis=1)
    var = ((x - mu[:, None]) ** 2).mean(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu[:, None]) * rstd[:, None]
    return xhat * gain + bias, mu, rstd


def layer_norm_bwd(x, gy, mu, rstd, gain):
    xhat = (x - mu[:, None]) * rstd[:, None]
    gxhat = gy * gain
    m1 = gxhat.mean(axis=1, keepdims=True)
    m2 = (gxhat * xhat).mean(axis=1, keepdims=True)
    gx = rstd[:, None] * (gxhat - m1 - xhat * m2)
    ggain = (gy * xhat).sum(axis=0)
    gbias = gy.sum(axis=0)
    return gx, ggain, gbias


def gelu_fwd(x):
    """tanh-form GELU on a flat array."""
    t = np.tanh(_GELU_C * (x + _GELU_A * x ** 3))
    return 0.5 * x * (1.0 + t)


def gelu_bwd(x, gy):
    t = np.tanh(_GELU_C * (x + _GELU_A * x ** 3))
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x ** 2)
    return gy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def add_rows_at(out, idx, rows):
    """out[idx[i]] += rows[i], with repeated indices accumulating."""
    np.add.at(out, idx, rows)


def warmup():
    """No compilation in this lane; present for interface parity."""
