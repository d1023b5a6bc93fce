"""LLaMA-style causal transformer forward pass.

Block wiring: RMSNorm -> multi-head causal attention with rotary Q/K ->
residual -> RMSNorm -> SwiGLU FFN -> residual.  Attention probabilities are
materialized as a full (heads, N, N) tensor per layer.
"""

from __future__ import annotations

import math
import time

from .. import tensor as T
from .config import TransformerConfig
from .trace import ForwardTrace, check_tokens, metered


def forward_transformer(
    config: TransformerConfig,
    weights,
    tokens=None,
    collect=(),
    meter: T.AllocationMeter | None = None,
    inputs_embeds: T.Tensor | None = None,
) -> ForwardTrace:
    """Run the stack on ``tokens`` (or precomputed ``inputs_embeds``).

    ``collect`` may contain ``"hidden"`` and/or ``"attentions"``; collected
    tensors stay alive (and metered) as long as the trace does.
    """
    collect = frozenset(collect)
    start = time.perf_counter_ns()
    with metered(meter) as m:
        if inputs_embeds is None:
            ids = check_tokens(tokens, config.vocab)
            x = T.embed(weights["embed"], ids)
        else:
            x = inputs_embeds
        n = x.shape[0]
        if n > config.max_positions:
            raise ValueError(f"sequence length {n} exceeds max_positions {config.max_positions}")
        heads, dk = config.heads, config.head_dim
        precision = x.precision
        cos, sin = T.rope_tables(n, dk, config.rope_base, x.dtype)
        mask = T.causal_mask(n, precision)
        scale = 1.0 / math.sqrt(dk)

        hidden = [x] if "hidden" in collect else []
        attentions = [] if "attentions" in collect else None
        for i in range(config.layers):
            w = _layer(weights, i)
            h = T.rms_norm(x, w["attn_norm"])
            q = T.rope(_split_heads(h @ w["wq"], n, heads, dk), cos, sin)
            k = T.rope(_split_heads(h @ w["wk"], n, heads, dk), cos, sin)
            v = _split_heads(h @ w["wv"], n, heads, dk)
            del h
            scores = (q @ k.transpose(0, 2, 1)) * scale + mask
            del q, k
            probs = T.softmax_rows(scores)
            del scores
            ctx = (probs @ v).transpose(1, 0, 2).reshape(n, config.d_model)
            if attentions is not None:
                attentions.append(probs)
            del probs, v
            x = x + ctx @ w["wo"]
            del ctx
            h = T.rms_norm(x, w["ffn_norm"])
            x = x + (T.silu(h @ w["w_gate"]) * (h @ w["w_up"])) @ w["w_down"]
            del h
            if hidden:
                hidden.append(x)
        del mask
        if config.layers:
            logits = T.rms_norm(x, weights["final_norm"]) @ weights["lm_head"]
        else:
            logits = x @ weights["embed"].transpose()
        del x
        peak = m.peak_bytes if m is not None else 0
    elapsed = (time.perf_counter_ns() - start) / 1e6
    return ForwardTrace(logits, hidden, attentions, peak, elapsed)


def _layer(weights, i: int) -> dict:
    prefix = f"layers.{i}."
    return {k[len(prefix):]: v for k, v in weights.items() if k.startswith(prefix)}


def _split_heads(t: T.Tensor, n: int, heads: int, dk: int) -> T.Tensor:
    return t.reshape(n, heads, dk).transpose(1, 0, 2)
