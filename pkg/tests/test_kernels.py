"""Both kernel lanes must agree; the env flag must pick the lane."""

import os
import subprocess
import sys

import numpy as np
import pytest

from dimscore.kernels import active_backend, numpy_ops

try:
    from dimscore.kernels import numba_ops
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def _rand(shape, seed):
    return np.random.default_rng(seed).standard_normal(shape) * 3.0


@needs_numba
@pytest.mark.parametrize("n,k", [(1, 1), (3, 7), (16, 33)])
def test_softmax_rows_lanes_agree(n, k):
    x = np.ascontiguousarray(_rand((n, k), 0))
    a = numpy_ops.softmax_rows(x)
    b = numba_ops.softmax_rows(x)
    assert np.max(np.abs(a - b)) < 1e-14
    gy = np.ascontiguousarray(_rand((n, k), 1))
    ga = numpy_ops.softmax_rows_grad(a, gy)
    gb = numba_ops.softmax_rows_grad(b, gy)
    assert np.max(np.abs(ga - gb)) < 1e-13


@needs_numba
def test_logsumexp_lanes_agree():
    x = np.ascontiguousarray(_rand((5, 9), 2))
    a = numpy_ops.logsumexp_rows(x)
    b = numba_ops.logsumexp_rows(x)
    assert np.max(np.abs(a - b)) < 1e-13
    gy = np.ascontiguousarray(_rand((5,), 3))
    ga = numpy_ops.logsumexp_rows_grad(x, a, gy)
    gb = numba_ops.logsumexp_rows_grad(x, b, gy)
    assert np.max(np.abs(ga - gb)) < 1e-13


@needs_numba
def test_layer_norm_lanes_agree():
    x = np.ascontiguousarray(_rand((6, 12), 4))
    gain = np.ascontiguousarray(_rand((12,), 5))
    bias = np.ascontiguousarray(_rand((12,), 6))
    ya, mua, ra = numpy_ops.layer_norm_fwd(x, gain, bias, 1e-5)
    yb, mub, rb = numba_ops.layer_norm_fwd(x, gain, bias, 1e-5)
    assert np.max(np.abs(ya - yb)) < 1e-13
    gy = np.ascontiguousarray(_rand((6, 12), 7))
    outs_a = numpy_ops.layer_norm_bwd(x, gy, mua, ra, gain)
    outs_b = numba_ops.layer_norm_bwd(x, gy, mub, rb, gain)
    for ga, gb in zip(outs_a, outs_b):
        assert np.max(np.abs(ga - gb)) < 1e-12


@needs_numba
def test_gelu_lanes_agree():
    x = np.ascontiguousarray(_rand((200,), 8))
    assert np.max(np.abs(numpy_ops.gelu_fwd(x) - numba_ops.gelu_fwd(x))) < 1e-14
    gy = np.ascontiguousarray(_rand((200,), 9))
    assert np.max(np.abs(numpy_ops.gelu_bwd(x, gy)
                         - numba_ops.gelu_bwd(x, gy))) < 1e-13


@needs_numba
def test_add_rows_at_lanes_agree():
    idx = np.array([0, 2, 2, 1, 0], dtype=np.int64)
    rows = np.ascontiguousarray(_rand((5, 4), 10))
    acc_a = np.zeros((3, 4))
    acc_b = np.zeros((3, 4))
    numpy_ops.add_rows_at(acc_a, idx, rows)
    numba_ops.add_rows_at(acc_b, idx, rows)
    assert np.max(np.abs(acc_a - acc_b)) < 1e-14
    # repeated indices must accumulate, not overwrite
    expect = np.zeros((3, 4))
    np.add.at(expect, idx, rows)
    assert np.max(np.abs(acc_a - expect)) < 1e-14


def test_active_backend_reports_a_lane():
    assert active_backend() in ("numpy", "numba")


@pytest.mark.parametrize("lane", ["numpy"] + (["numba"] if HAVE_NUMBA else []))
def test_env_flag_selects_lane(lane):
    env = dict(os.environ, DIMSCORE_BACKEND=lane)
    out = subprocess.run(
        [sys.executable, "-c",
         "from dimscore.kernels import active_backend; print(active_backend())"],
        capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == lane


def test_unknown_lane_rejected():
    env = dict(os.environ, DIMSCORE_BACKEND="cuda")
    out = subprocess.run(
        [sys.executable, "-c", "import dimscore.kernels"],
        capture_output=True, text=True, env=env)
    assert out.returncode != 0
