"""Selective state-space (Mamba-style) forward pass.

Each block: RMSNorm -> input projection to (signal, gate) -> depthwise causal
conv + SiLU -> input-dependent delta (softplus), B, C -> selective scan ->
SiLU-gated output -> down projection -> residual.
"""

from __future__ import annotations

import time

from .. import tensor as T
from .config import MambaConfig
from .scan import selective_scan
from .trace import ForwardTrace, check_tokens, metered


def forward_mamba(
    config: MambaConfig,
    weights,
    tokens=None,
    collect=(),
    meter: T.AllocationMeter | None = None,
    inputs_embeds: T.Tensor | None = None,
) -> ForwardTrace:
    collect = frozenset(collect)
    if "attentions" in collect:
        raise ValueError("the recurrent stack has no attention matrices")
    start = time.perf_counter_ns()
    with metered(meter) as m:
        if inputs_embeds is None:
            x = T.embed(weights["embed"], check_tokens(tokens, config.vocab))
        else:
            x = inputs_embeds
        di, r, s = config.d_inner, config.dt_rank, config.d_state

        hidden = [x] if "hidden" in collect else []
        final_states = []
        for i in range(config.layers):
            p = f"layers.{i}."
            h = T.rms_norm(x, weights[p + "norm"])
            xz = h @ weights[p + "in_proj"]
            del h
            xc = T.silu(T.causal_conv1d(xz[:, :di], weights[p + "conv_weight"], weights[p + "conv_bias"]))
            dbc = xc @ weights[p + "x_proj"]
            delta = T.softplus(dbc[:, :r] @ weights[p + "dt_proj"] + weights[p + "dt_bias"])
            A = T.exp(weights[p + "A_log"]) * -1.0
            y, states = selective_scan(delta, A, dbc[:, r : r + s], dbc[:, r + s :], xc)
            del delta, A, dbc, xc
            final_states.append(T.Tensor(states.data[-1], tag="ssm_state"))
            del states
            x = x + (y * T.silu(xz[:, di:])) @ weights[p + "out_proj"]
            del y, xz
            if hidden:
                hidden.append(x)
        if config.layers:
            logits = T.rms_norm(x, weights["final_norm"]) @ weights["lm_head"]
        else:
            logits = x @ weights["embed"].transpose()
        del x
        peak = m.peak_bytes if m is not None else 0
    elapsed = (time.perf_counter_ns() - start) / 1e6
    return ForwardTrace(logits, hidden, None, peak, elapsed, final_states)
