"""Representational metrics computed from forward traces.

Hidden-state dynamics (velocity, drift, windowed stability), attention
statistics (entropy, distance, top-k concentration, effective span) and a
gradient-based effective context window for the recurrent stack.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import NotApplicable, TooShort
from .models import MambaConfig, ModelConfig, TransformerConfig, cast_weights, forward
from .models.trace import check_tokens

ENTROPY_EPS = 1e-10
PROBE_FRACTIONS = (0.25, 0.4375, 0.625, 0.8125, 1.0)


def _states(hidden) -> np.ndarray:
    h = np.asarray(hidden.data if isinstance(hidden, T.Tensor) else hidden, dtype=np.float64)
    if h.ndim != 2:
        raise ValueError("hidden states must be an N x d array")
    if h.shape[0] < 2:
        raise TooShort("need at least two positions")
    return h


# ---------------------------------------------------------------------------
# hidden-state dynamics


def state_velocity(hidden) -> tuple[np.ndarray, float, float]:
    """Step sizes ``||h_t - h_{t-1}||`` with their mean and max."""
    h = _states(hidden)
    v = np.linalg.norm(np.diff(h, axis=0), axis=1)
    return v, float(v.mean()), float(v.max())


def state_drift(hidden) -> tuple[np.ndarray, float]:
    """Distances from the first position's state, and the final one."""
    h = _states(hidden)
    d = np.linalg.norm(h[1:] - h[0], axis=1)
    return d, float(d[-1])


def state_stability(hidden, window: int = 50) -> np.ndarray:
    """Mean over dimensions of the population variance in each trailing window.

    Entry ``k`` covers positions ``k .. k+window-1``.
    """
    h = np.asarray(hidden.data if isinstance(hidden, T.Tensor) else hidden, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be positive")
    if h.ndim != 2 or h.shape[0] < window:
        raise TooShort(f"need at least {window} positions")
    windows = np.lib.stride_tricks.sliding_window_view(h, window, axis=0)  # (N-w+1, d, w)
    return windows.var(axis=2).mean(axis=1)


@dataclass
class LayerDynamics:
    layer: int
    velocity: list[float]
    mean_velocity: float
    max_velocity: float
    drift: list[float]
    final_drift: float
    stability: list[float]
    mean_stability: float | None
    final_norm: float


@dataclass
class StateReport:
    layers: list[LayerDynamics]
    window: int = 50

    def to_json(self) -> dict:
        return asdict(self)


def state_report(hidden_states, window: int = 50) -> StateReport:
    """Dynamics for each layer output (index 0 is the embedding output, skipped).

    Stability is left empty when the sequence is shorter than ``window``.
    """
    layers = []
    for i, h in enumerate(hidden_states[1:], start=1):
        h = _states(h)
        v, v_mean, v_max = state_velocity(h)
        d, d_final = state_drift(h)
        stab = state_stability(h, window) if h.shape[0] >= window else np.zeros(0)
        layers.append(
            LayerDynamics(
                i,
                v.tolist(),
                v_mean,
                v_max,
                d.tolist(),
                d_final,
                stab.tolist(),
                float(stab.mean()) if stab.size else None,
                float(np.linalg.norm(h[-1])),
            )
        )
    return StateReport(layers, window)


# ---------------------------------------------------------------------------
# attention statistics


def _attn(attentions) -> np.ndarray:
    if isinstance(attentions, T.Tensor):
        attentions = attentions.data
    elif isinstance(attentions, (list, tuple)):
        attentions = np.stack([a.data if isinstance(a, T.Tensor) else a for a in attentions])
    a = np.asarray(attentions, dtype=np.float64)
    while a.ndim < 4:
        a = a[None]
    if a.ndim != 4 or a.shape[-1] != a.shape[-2]:
        raise ValueError("attentions must be (layers, heads, N, N)")
    return a


def _backward_offsets(n: int) -> np.ndarray:
    i = np.arange(n)
    return np.maximum(i[:, None] - i[None, :], 0).astype(np.float64)


def position_entropy(attentions) -> np.ndarray:
    """Per (layer, head, position) entropy in nats."""
    a = _attn(attentions)
    return -(a * np.log(a + ENTROPY_EPS)).sum(axis=-1)


def position_distance(attentions) -> np.ndarray:
    """Per (layer, head, position) expected backward distance."""
    a = _attn(attentions)
    return (a * _backward_offsets(a.shape[-1])).sum(axis=-1)


def position_concentration(attentions, k: int = 5) -> np.ndarray:
    a = _attn(attentions)
    n = a.shape[-1]
    if k >= n:
        return a.sum(axis=-1)
    return np.partition(a, n - k, axis=-1)[..., n - k :].sum(axis=-1)


def attention_entropy(attentions) -> tuple[list[float], float]:
    """Mean entropy per layer and overall (positions, heads, layers)."""
    e = position_entropy(attentions)
    return e.mean(axis=(1, 2)).tolist(), float(e.mean())


def attention_distance(attentions) -> tuple[list[float], float]:
    d = position_distance(attentions)
    return d.mean(axis=(1, 2)).tolist(), float(d.mean())


def attention_concentration(attentions, k: int = 5) -> tuple[list[float], float]:
    c = position_concentration(attentions, k)
    return c.mean(axis=(1, 2)).tolist(), float(c.mean())


@dataclass
class SpanStats:
    mean: float
    max: float
    std: float
    cv: float
    unqualified: int
    fraction: float  # mean of span / position over positions >= 1


def effective_span_transformer(attentions, threshold: float = 0.01) -> tuple[np.ndarray, SpanStats]:
    """Distance to the earliest key whose weight exceeds ``threshold``.

    Rows with no qualifying weight get span 0 and are counted in
    ``unqualified``.  ``cv`` is std/mean, or 0 when the mean is 0;
    ``std`` is the population standard deviation.
    """
    a = _attn(attentions)
    hits = a > threshold
    qualified = hits.any(axis=-1)
    first = np.argmax(hits, axis=-1)
    spans = np.where(qualified, np.arange(a.shape[-1]) - first, 0).astype(np.float64)
    mean, std = float(spans.mean()), float(spans.std())
    pos = np.arange(1, a.shape[-1])
    fraction = float((spans[..., 1:] / pos).mean()) if pos.size else 0.0
    stats = SpanStats(
        mean, float(spans.max()), std, std / mean if mean > 0 else 0.0, int((~qualified).sum()), fraction
    )
    return spans, stats


@dataclass
class AttentionReport:
    entropy_per_layer: list[float]
    entropy: float
    distance_per_layer: list[float]
    distance: float
    concentration_per_layer: list[float]
    concentration: float
    span: SpanStats
    top_k: int = 5

    def to_json(self) -> dict:
        return asdict(self)


def attention_report(attentions, k: int = 5, threshold: float = 0.01) -> AttentionReport:
    ent_l, ent = attention_entropy(attentions)
    dist_l, dist = attention_distance(attentions)
    conc_l, conc = attention_concentration(attentions, k)
    _, span = effective_span_transformer(attentions, threshold)
    return AttentionReport(ent_l, ent, dist_l, dist, conc_l, conc, span, k)


# ---------------------------------------------------------------------------
# gradient-based effective context


def probe_positions(n: int, fractions=PROBE_FRACTIONS) -> list[int]:
    return [max(0, round(f * n) - 1) for f in fractions]


@dataclass
class ProbeResult:
    position: int
    effective_range: int
    qualifying: int
    magnitudes: list[float] = field(repr=False, default_factory=list)


@dataclass
class ContextReport:
    probes: list[ProbeResult]
    mean_range: float
    fraction_used: float
    cv: float
    threshold: float

    def to_json(self, magnitudes: bool = False) -> dict:
        out = asdict(self)
        if not magnitudes:
            for p in out["probes"]:
                p.pop("magnitudes")
        return out


def input_gradient_magnitudes(config: ModelConfig, weights, ids, probe: int) -> np.ndarray:
    """Per-token L2 norm of d||h_probe|| / d(embedding) over positions 0..probe.

    ``h_probe`` is the final layer's residual output at ``probe``; the pass
    runs on a double-precision verification tape.
    """
    ids = check_tokens(ids, config.vocab)[: probe + 1]
    w64 = cast_weights(weights, "double")
    x = T.Tensor(w64["embed"].data[ids], "double")
    with T.GradientTape(verify=True) as tape:
        tape.watch(x)
        trace = forward(config, w64, collect=("hidden",), inputs_embeds=x)
        target = T.l2_norm(trace.hidden_states[-1][probe])
    (g,) = tape.gradient(target, [x])
    return np.linalg.norm(g, axis=1)


def effective_context_ssm(
    config: MambaConfig, weights, tokens, probes: int = 5, threshold: float = 0.1
) -> ContextReport:
    """Effective range at each probe: probe index minus the earliest token
    whose gradient magnitude reaches ``threshold`` times the maximum."""
    if not isinstance(config, MambaConfig):
        raise NotApplicable("gradient context probing targets the recurrent stack")
    ids = check_tokens(tokens, config.vocab)
    n = len(ids)
    if n < 8:
        raise TooShort("need at least 8 tokens")
    if probes == len(PROBE_FRACTIONS):
        fractions = PROBE_FRACTIONS
    else:
        fractions = tuple(np.linspace(0.25, 1.0, probes))
    results = []
    for pos in probe_positions(n, fractions):
        mags = input_gradient_magnitudes(config, weights, ids, pos)
        top = float(mags.max())
        qual = np.flatnonzero((mags >= threshold * top) & (mags > 0)) if top > 0 else np.zeros(0, int)
        rng_ = pos - int(qual[0]) if qual.size else 0
        results.append(ProbeResult(pos, rng_, int(qual.size), mags.tolist()))
    ranges = np.array([r.effective_range for r in results], dtype=np.float64)
    frac = float(np.mean([r.effective_range / r.position if r.position else 0.0 for r in results]))
    mean = float(ranges.mean())
    cv = float(ranges.std() / mean) if mean > 0 else 0.0
    return ContextReport(results, mean, frac, cv, threshold)


# ---------------------------------------------------------------------------
# one-call analysis used by the pipeline


def analyze_trace(config: ModelConfig, weights, ids, window: int = 50, probes: int = 5) -> dict:
    """All metrics for one architecture on one token sequence."""
    is_tf = isinstance(config, TransformerConfig)
    collect = ("hidden", "attentions") if is_tf else ("hidden",)
    trace = forward(config, weights, ids, collect=collect)
    out = {"N": int(len(ids)), "states": state_report(trace.hidden_states, window).to_json()}
    if is_tf:
        out["attention"] = attention_report(trace.attention_array()).to_json()
    else:
        out["context"] = effective_context_ssm(config, weights, ids, probes).to_json()
    return out

