import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scalebench import tensor as T
from scalebench.errors import NotApplicable, TooShort
from scalebench.models import MambaConfig, forward, init_weights
from scalebench.representation import (
    attention_concentration,
    attention_distance,
    attention_entropy,
    attention_report,
    effective_context_ssm,
    effective_span_transformer,
    input_gradient_magnitudes,
    position_distance,
    position_entropy,
    probe_positions,
    state_drift,
    state_report,
    state_stability,
    state_velocity,
)

# --- brute-force oracles --------------------------------------------------------


def brute_velocity(h):
    return [math.sqrt(sum((h[t][k] - h[t - 1][k]) ** 2 for k in range(len(h[0])))) for t in range(1, len(h))]


def brute_drift(h):
    return [math.sqrt(sum((h[t][k] - h[0][k]) ** 2 for k in range(len(h[0])))) for t in range(1, len(h))]


def brute_stability(h, w):
    out = []
    d = len(h[0])
    for end in range(w - 1, len(h)):
        win = h[end - w + 1 : end + 1]
        total = 0.0
        for k in range(d):
            col = [row[k] for row in win]
            mu = sum(col) / w
            total += sum((c - mu) ** 2 for c in col) / w
        out.append(total / d)
    return out


def brute_attention(a, k=5):
    layers, heads, n, _ = np.shape(a)
    a = np.asarray(a, dtype=np.float64).tolist()
    ent = dist = conc = 0.0
    for l in range(layers):
        for h in range(heads):
            for i in range(n):
                row = a[l][h][i]
                ent += -sum(row[j] * math.log(row[j] + 1e-10) for j in range(i + 1))
                dist += sum(row[j] * (i - j) for j in range(i + 1))
                conc += sum(sorted(row[: i + 1], reverse=True)[:k])
    m = layers * heads * n
    return ent / m, dist / m, conc / m


def random_causal_attention(rng, layers=2, heads=3, n=12):
    logits = rng.normal(0, 2, (layers, heads, n, n))
    logits[..., np.triu_indices(n, 1)[0], np.triu_indices(n, 1)[1]] = -np.inf
    e = np.exp(logits - logits.max(-1, keepdims=True))
    return e / e.sum(-1, keepdims=True)


# --- hidden-state dynamics ----------------------------------------------------


def test_velocity_examples():
    v, mean, mx = state_velocity(np.zeros((5, 3)))
    assert np.all(v == 0) and mean == 0 and mx == 0
    v, _, _ = state_velocity([[0, 0], [3, 4]])
    assert v.tolist() == [5.0]


def test_velocity_matches_brute_force(rng):
    h = rng.normal(size=(10, 4))
    v, mean, mx = state_velocity(h)
    ref = brute_velocity(h.tolist())
    np.testing.assert_allclose(v, ref, rtol=0, atol=1e-12)
    assert mean == pytest.approx(sum(ref) / len(ref), abs=1e-12) and mx == pytest.approx(max(ref), abs=1e-12)


def test_drift_examples():
    d, final = state_drift([[0, 0], [1, 0], [2, 0]])
    assert d.tolist() == [1.0, 2.0] and final == 2.0
    u = np.array([0.3, -1.2, 0.5])
    d, _ = state_drift(np.outer(np.arange(1, 9), u))
    assert np.all(np.diff(d) > 0)
    np.testing.assert_allclose(d, np.arange(1, 8) * np.linalg.norm(u))


def test_first_step_drift_equals_velocity(rng):
    h = rng.normal(size=(6, 3))
    assert state_drift(h)[0][0] == state_velocity(h)[0][0]


def test_stability_examples(rng):
    assert np.all(state_stability(np.ones((60, 4)), 50) == 0)
    assert len(state_stability(rng.normal(size=(60, 4)), 50)) == 11
    a, b = rng.normal(size=4), rng.normal(size=4)
    h = np.array([a, b] * 3)
    np.testing.assert_allclose(state_stability(h, 2), np.sum((a - b) ** 2) / (4 * 4), rtol=1e-12)


def test_stability_matches_brute_force(rng):
    h = rng.normal(size=(20, 3))
    np.testing.assert_allclose(state_stability(h, 7), brute_stability(h.tolist(), 7), rtol=0, atol=1e-12)


def test_too_short():
    with pytest.raises(TooShort):
        state_velocity([[1.0, 2.0]])
    with pytest.raises(TooShort):
        state_drift([[1.0]])
    with pytest.raises(TooShort):
        state_stability(np.zeros((10, 2)), 50)


@given(st.integers(0, 2**31))
def test_dynamics_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(12, 5))
    q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    hr = h @ q
    np.testing.assert_allclose(state_velocity(hr)[0], state_velocity(h)[0], atol=1e-10)
    np.testing.assert_allclose(state_drift(hr)[0], state_drift(h)[0], atol=1e-10)
    # per-dimension variances are not rotation invariant, but their sum is
    np.testing.assert_allclose(state_stability(hr, 4), state_stability(h, 4), atol=1e-10)


def test_state_report_layers(mamba_config, mamba_weights):
    trace = forward(mamba_config, mamba_weights, np.arange(60) % 256, collect=("hidden",))
    rep = state_report(trace.hidden_states, 50)
    assert [l.layer for l in rep.layers] == [1, 2]
    layer = rep.layers[-1]
    assert len(layer.velocity) == len(layer.drift) == 59 and len(layer.stability) == 11
    assert layer.final_norm == pytest.approx(np.linalg.norm(trace.hidden_states[-1].data[-1]))
    short = state_report(trace.hidden_states[:2], 100)
    assert short.layers[0].stability == [] and short.layers[0].mean_stability is None


# --- attention statistics -----------------------------------------------------


def test_uniform_attention_over_eight():
    a = np.tril(np.ones((8, 8)))
    a /= a.sum(1, keepdims=True)
    assert position_entropy(a)[0, 0, 7] == pytest.approx(math.log(8), abs=1e-6)
    assert position_distance(a)[0, 0, 7] == pytest.approx(3.5, abs=1e-6)


def test_self_attention_is_zero_entropy_and_distance():
    a = np.eye(6)
    _, ent = attention_entropy(a)
    _, dist = attention_distance(a)
    assert ent <= 1e-6 and dist == 0.0
    assert position_entropy(a)[0, 0, 0] <= 1e-6


def test_first_token_attention_distance():
    a = np.zeros((5, 5))
    a[:, 0] = 1.0
    np.testing.assert_allclose(position_distance(a)[0, 0], np.arange(5))


def test_uniform_prefix_distance_is_half_index():
    n = 9
    a = np.tril(np.ones((n, n)))
    a /= a.sum(1, keepdims=True)
    np.testing.assert_allclose(position_distance(a)[0, 0], np.arange(n) / 2)


def test_concentration_examples():
    assert attention_concentration(np.eye(7))[1] == pytest.approx(1.0)
    row10 = np.full((1, 1, 10, 10), 0.1)
    assert attention_concentration(row10, 5)[1] == pytest.approx(0.5)
    row3 = np.full((1, 1, 3, 3), 1 / 3)
    assert attention_concentration(row3, 5)[1] == pytest.approx(1.0)


def test_attention_bounds_on_model_trace(tf_config, tf_weights, rng):
    n = 40
    a = forward(tf_config, tf_weights, rng.integers(0, 256, n), collect=("attentions",)).attention_array()
    ent, dist = position_entropy(a), position_distance(a)
    bound = np.log(np.arange(1, n + 1))
    assert np.all(ent <= bound + 1e-6) and np.all(ent >= -1e-9)
    assert np.all(dist >= 0) and np.all(dist <= np.arange(n) + 1e-9)
    _, overall = attention_entropy(a)
    assert 0 <= overall <= math.log(n)


def test_attention_metrics_match_brute_force(rng):
    a = random_causal_attention(rng)
    ent, dist, conc = brute_attention(a)
    assert attention_entropy(a)[1] == pytest.approx(ent, abs=1e-9)
    assert attention_distance(a)[1] == pytest.approx(dist, abs=1e-9)
    assert attention_concentration(a)[1] == pytest.approx(conc, abs=1e-9)


def test_span_examples():
    spans, stats = effective_span_transformer(np.eye(5))
    assert np.all(spans == 0) and stats.unqualified == 0
    a = np.tril(np.ones((50, 50)))
    a /= a.sum(1, keepdims=True)
    spans, _ = effective_span_transformer(a)
    assert spans[0, 0, 49] == 49
    wide = np.eye(200)
    wide[199] = 1 / 200
    spans, stats = effective_span_transformer(wide)
    assert spans[0, 0, 199] == 0 and stats.unqualified == 1


def test_span_matches_brute_force(rng):
    a = random_causal_attention(rng, n=15)
    spans, stats = effective_span_transformer(a, 0.05)
    ref = []
    for l in range(a.shape[0]):
        for h in range(a.shape[1]):
            for i in range(a.shape[2]):
                js = [j for j in range(i + 1) if a[l, h, i, j] > 0.05]
                ref.append(i - js[0] if js else 0)
    assert stats.mean == pytest.approx(np.mean(ref), abs=1e-12)
    assert stats.max == max(ref)
    assert stats.cv == pytest.approx(np.std(ref) / np.mean(ref), abs=1e-12)


def test_attention_report_fields(rng):
    rep = attention_report(random_causal_attention(rng))
    assert len(rep.entropy_per_layer) == 2 and 0 < rep.concentration <= 1


# --- effective context --------------------------------------------------------


def test_probe_positions():
    assert probe_positions(64) == [15, 27, 39, 51, 63]
    assert probe_positions(8)[-1] == 7


def test_gradient_magnitudes_match_finite_differences(mamba_config):
    w = init_weights(mamba_config, 5, "double")
    ids = np.random.default_rng(5).integers(0, 256, 64)
    probe = 63
    mags = input_gradient_magnitudes(mamba_config, w, ids, probe)
    x0 = w["embed"].data[ids]

    def target(x):
        trace = forward(mamba_config, w, collect=("hidden",), inputs_embeds=T.Tensor(x, "double"))
        return float(np.linalg.norm(trace.hidden_states[-1].data[probe]))

    fd = T.finite_difference_gradient(target, x0)
    assert T.relative_error(mags, np.linalg.norm(fd, axis=1)) <= 1e-3


def _pass_through_model():
    cfg = MambaConfig(layers=1, d_model=16, d_state=4, expand=2, d_conv=4, vocab=256)
    w = init_weights(cfg, 0, "double")
    w["layers.0.dt_bias"] = T.Tensor(np.full(cfg.d_inner, -80.0), "double", tag="param")
    conv = np.zeros((cfg.d_inner, cfg.d_conv))
    conv[:, -1] = 1.0  # current step only
    w["layers.0.conv_weight"] = T.Tensor(conv, "double", tag="param")
    return cfg, w


def test_unmixed_model_has_zero_range():
    cfg, w = _pass_through_model()
    rep = effective_context_ssm(cfg, w, np.arange(32))
    assert all(p.effective_range == 0 and p.qualifying == 1 for p in rep.probes)
    assert rep.mean_range == 0 and rep.fraction_used == 0


def test_zero_threshold_counts_every_influencing_token(mamba_config):
    w = init_weights(mamba_config, 1)
    rep = effective_context_ssm(mamba_config, w, np.arange(16), threshold=0.0)
    for p in rep.probes:
        assert p.effective_range == p.position
        assert p.qualifying == p.position + 1
    assert rep.fraction_used == pytest.approx(1.0)


def test_context_report_invariants(mamba_config, mamba_weights):
    rep = effective_context_ssm(mamba_config, mamba_weights, np.arange(40) % 256, threshold=0.01)
    assert [p.position for p in rep.probes] == probe_positions(40)
    assert all(0 <= p.effective_range <= p.position for p in rep.probes)
    assert 0 <= rep.fraction_used <= 1
    assert "magnitudes" not in rep.to_json()["probes"][0]


def test_context_preconditions(tf_config, mamba_config, mamba_weights):
    with pytest.raises(NotApplicable):
        effective_context_ssm(tf_config, None, np.arange(16))
    with pytest.raises(TooShort):
        effective_context_ssm(mamba_config, mamba_weights, np.arange(5))
