"""Selective scan: the input-dependent diagonal recurrence behind Mamba.

    h_t = exp(delta_t * A) * h_{t-1} + (delta_t * x_t) B_t
    y_t = <h_t, C_t>

with elementwise products over (d_inner, d_state) and h_0 given (zero by
default).  The Euler rule is used for B; A is discretized exactly.
"""

from __future__ import annotations

import numpy as np

from ..errors import NonPositiveDelta
from ..tensor import Tensor, _emit, _maybe_record, _result_dtype, workspace


def _check(delta, A, B, C, x):
    n, d = x.shape
    if delta.shape != (n, d) or A.shape[0] != d or B.shape != (n, A.shape[1]) or C.shape != B.shape:
        raise ValueError(
            f"inconsistent scan shapes delta{delta.shape} A{A.shape} B{B.shape} C{C.shape} x{x.shape}"
        )
    if not np.all(delta > 0):
        raise NonPositiveDelta("delta must be strictly positive")


def _run(delta, A, B, C, x, h0, dtype):
    n, d = x.shape
    decay = np.exp(delta[:, :, None] * A[None])
    drive = (delta * x)[:, :, None] * B[:, None, :]
    states = np.empty((n, d, A.shape[1]), dtype=dtype)
    h = np.zeros((d, A.shape[1]), dtype=dtype) if h0 is None else np.asarray(h0, dtype=dtype)
    for t in range(n):
        h = decay[t] * h + drive[t]
        states[t] = h
    y = np.einsum("tdn,tn->td", states, C).astype(dtype, copy=False)
    return y, states, decay


def selective_scan_array(delta, A, B, C, x, h0=None):
    """Plain-numpy scan returning ``(y, states)``; states has shape (N, d_inner, d_state)."""
    arrays = [np.asarray(a) for a in (delta, A, B, C, x)]
    dtype = np.result_type(*arrays, np.float32)
    _check(*arrays)
    y, states, _ = _run(*arrays, h0, dtype)
    return y, states


def selective_scan(delta: Tensor, A: Tensor, B: Tensor, C: Tensor, x: Tensor, h0=None):
    """Metered, differentiable scan returning ``(y, states)`` as tensors.

    Gradients flow from ``y`` to all five inputs; ``states`` is an analysis
    output and is not differentiated.
    """
    dd, ad, bd, cd, xd = (t.data for t in (delta, A, B, C, x))
    _check(dd, ad, bd, cd, xd)
    dtype = _result_dtype(delta, A, B, C, x)
    n, d = xd.shape
    s = ad.shape[1]
    cache = {}

    def compute_states():
        y, states, decay = _run(dd, ad, bd, cd, xd, h0, dtype)
        cache.update(y=y, decay=decay)
        return states

    with workspace((2, n, d, s), dtype):
        states = _emit((n, d, s), dtype, compute_states)
        y = _emit((n, d), dtype, lambda: cache.pop("y"))
    decay = cache.pop("decay")
    sd = states.data

    def backward(gy):
        gh = np.empty(sd.shape, dtype=gy.dtype)
        carry = np.zeros((d, s), dtype=gy.dtype)
        for t in range(n - 1, -1, -1):
            carry = gy[t][:, None] * cd[t][None, :] + carry
            gh[t] = carry
            carry = decay[t] * carry
        prev = np.empty_like(sd)
        prev[0] = 0.0 if h0 is None else h0
        prev[1:] = sd[:-1]
        g_decay = gh * prev * decay
        gB_factor = (gh * bd[:, None, :]).sum(axis=2)
        g_delta = (g_decay * ad[None]).sum(axis=2) + gB_factor * xd
        gA = (g_decay * dd[:, :, None]).sum(axis=0)
        gB = (gh * (dd * xd)[:, :, None]).sum(axis=1)
        gC = np.einsum("tdn,td->tn", sd, gy)
        gx = gB_factor * dd
        return (g_delta, gA, gB, gC, gx)

    _maybe_record(y, (delta, A, B, C, x), backward)
    return y, states
