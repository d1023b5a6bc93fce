import math

import numpy as np
import pytest

from scalebench import tensor as T
from scalebench.errors import BadTokenId, OutOfBudget
from scalebench.models import (
    MambaConfig,
    TransformerConfig,
    forward,
    init_weights,
    load_weights,
    param_count,
    save_weights,
)


def _tf_hand_count(c: TransformerConfig) -> int:
    d, f, v = c.d_model, c.d_ffn, c.vocab
    per_layer = 2 * d + 4 * d * d + 3 * d * f
    return v * d + c.layers * per_layer + (d + d * v if c.layers else 0)


def _mamba_hand_count(c: MambaConfig) -> int:
    d, di, n, k, v = c.d_model, c.expand * c.d_model, c.d_state, c.d_conv, c.vocab
    r = math.ceil(d / 16)
    per_layer = d + d * 2 * di + di * k + di + di * (r + 2 * n) + r * di + di + di * n + di * d
    return v * d + c.layers * per_layer + (d + d * v if c.layers else 0)


def test_param_count_embedding_only():
    assert param_count(TransformerConfig(layers=0)) == 32000 * 512
    assert param_count(MambaConfig(layers=0)) == 32000 * 512


def test_full_size_param_counts_match_hand_sum():
    tf, mb = TransformerConfig.paper(), MambaConfig.paper()
    assert param_count(tf) == _tf_hand_count(tf)
    assert param_count(mb) == _mamba_hand_count(mb)
    assert 40e6 <= param_count(tf) <= 60e6
    assert 40e6 <= param_count(mb) <= 60e6
    assert abs(param_count(tf) - param_count(mb)) / max(param_count(tf), param_count(mb)) < 0.25


def test_param_count_without_embeddings():
    tf = TransformerConfig.paper()
    assert param_count(tf, embeddings=False) == param_count(tf) - 2 * tf.vocab * tf.d_model


def test_config_validation():
    with pytest.raises(ValueError):
        TransformerConfig(d_model=100, heads=8)
    assert TransformerConfig.paper() == TransformerConfig(layers=8, heads=8, d_model=512, d_ffn=1024, vocab=32000)
    assert MambaConfig.paper() == MambaConfig(layers=8, d_model=512, d_state=16, expand=2, d_conv=4, vocab=32000)


def test_init_is_seeded(mamba_config):
    a, b = init_weights(mamba_config, 3), init_weights(mamba_config, 3)
    c = init_weights(mamba_config, 4)
    assert all(np.array_equal(a[k].data, b[k].data) for k in a)
    assert not np.array_equal(a["embed"].data, c["embed"].data)
    assert np.std(a["embed"].data) == pytest.approx(0.02, rel=0.05)


@pytest.mark.parametrize("arch", ["transformer", "mamba"])
def test_weight_snapshot_roundtrip(tmp_path, arch, tf_config, mamba_config):
    config = tf_config if arch == "transformer" else mamba_config
    w = init_weights(config, 11)
    path = tmp_path / "w.bin"
    save_weights(path, config, w)
    raw = path.read_bytes()
    assert raw[:4] == b"SBWT"
    config2, w2 = load_weights(path)
    assert config2 == config
    assert all(np.array_equal(w[k].data, w2[k].data) for k in w)
    assert len(raw) == 4 + 12 + 4 * len(type(config).__dataclass_fields__) + 4 * param_count(config)


# --- transformer --------------------------------------------------------------


def test_single_token_attention_is_one(tf_config, tf_weights):
    trace = forward(tf_config, tf_weights, [7], collect=("attentions", "hidden"))
    assert len(trace.attentions) == tf_config.layers
    for a in trace.attentions:
        assert a.shape == (tf_config.heads, 1, 1)
        assert np.all(a.data == 1.0)


@pytest.mark.parametrize("arch", ["transformer", "mamba"])
def test_causality_at_random_splits(arch, tf_config, tf_weights, mamba_config, mamba_weights, rng):
    config, w = (tf_config, tf_weights) if arch == "transformer" else (mamba_config, mamba_weights)
    ids = rng.integers(0, 256, 24)
    base = forward(config, w, ids, collect=("hidden",))
    for split in rng.integers(1, 23, 4):
        edited = ids.copy()
        edited[split:] = rng.integers(0, 256, 24 - split)
        other = forward(config, w, edited, collect=("hidden",))
        assert np.array_equal(base.logits.data[:split], other.logits.data[:split])
        for h1, h2 in zip(base.hidden_states, other.hidden_states):
            assert np.array_equal(h1.data[:split], h2.data[:split])


@pytest.mark.parametrize("arch", ["transformer", "mamba"])
def test_forward_is_deterministic(arch, tf_config, mamba_config):
    config = tf_config if arch == "transformer" else mamba_config
    ids = np.arange(16) * 7 % 256
    a = forward(config, init_weights(config, 42), ids).logits.data
    b = forward(config, init_weights(config, 42), ids).logits.data
    assert np.array_equal(a, b)


def test_trace_shapes(tf_config, tf_weights):
    n = 10
    trace = forward(tf_config, tf_weights, np.arange(n), collect=("hidden", "attentions"))
    assert trace.logits.shape == (n, tf_config.vocab)
    assert len(trace.hidden_states) == tf_config.layers + 1
    assert trace.attention_array().shape == (tf_config.layers, tf_config.heads, n, n)
    assert trace.elapsed > 0


def test_attention_rows_are_causal_distributions(tf_config, tf_weights, rng):
    trace = forward(tf_config, tf_weights, rng.integers(0, 256, 33), collect=("attentions",))
    a = trace.attention_array()
    assert np.all(a >= 0)
    np.testing.assert_allclose(a.sum(-1), 1.0, atol=1e-6)
    assert np.all(np.triu(a, 1) == 0)


@pytest.mark.parametrize("n", [8, 32, 64])
def test_attention_storage_is_h_n_squared_words(tf_config, tf_weights, n):
    m = T.AllocationMeter()
    trace = forward(tf_config, tf_weights, np.arange(n), collect=("attentions",), meter=m)
    assert m.tagged("attention") == tf_config.layers * tf_config.heads * n * n * 4
    del trace
    assert m.tagged("attention") == 0


def test_benchmark_mode_peak_grows_quadratically(tf_config, tf_weights):
    peaks = []
    for n in (128, 256, 512):
        m = T.AllocationMeter()
        forward(tf_config, tf_weights, np.arange(n) % 256, meter=m)
        peaks.append(m.peak_bytes)
    d1, d2 = peaks[1] - peaks[0], peaks[2] - peaks[1]
    assert d2 / d1 > 3.0  # linear growth would give 2


def test_bad_token_id(tf_config, tf_weights):
    with pytest.raises(BadTokenId):
        forward(tf_config, tf_weights, [0, 256])


def test_max_positions_bound():
    cfg = TransformerConfig(layers=1, heads=2, d_model=8, d_ffn=8, vocab=16, max_positions=4)
    w = init_weights(cfg, 0)
    with pytest.raises(ValueError):
        forward(cfg, w, np.zeros(5, dtype=int))


def test_out_of_budget_propagates(tf_config, tf_weights):
    with pytest.raises(OutOfBudget):
        forward(tf_config, tf_weights, np.arange(64), meter=T.AllocationMeter(budget_bytes=1000))


def test_embedding_only_transformer_logits():
    cfg = TransformerConfig(layers=0, heads=2, d_model=8, d_ffn=8, vocab=16)
    w = init_weights(cfg, 0)
    trace = forward(cfg, w, [3, 5], collect=("hidden",))
    e = w["embed"].data
    np.testing.assert_allclose(trace.logits.data, e[[3, 5]] @ e.T, rtol=1e-6)


# --- mamba --------------------------------------------------------------------


def test_mamba_single_token_shapes(mamba_config, mamba_weights):
    trace = forward(mamba_config, mamba_weights, [1], collect=("hidden",))
    assert trace.attentions is None
    assert all(h.shape == (1, mamba_config.d_model) for h in trace.hidden_states)
    assert len(trace.hidden_states) == mamba_config.layers + 1


def test_mamba_rejects_attention_collection(mamba_config, mamba_weights):
    with pytest.raises(ValueError):
        forward(mamba_config, mamba_weights, [1, 2], collect=("attentions",))


def test_mamba_zero_embeddings_stay_zero(mamba_config, mamba_weights):
    x = T.Tensor(np.zeros((12, mamba_config.d_model)))
    trace = forward(mamba_config, mamba_weights, collect=("hidden",), inputs_embeds=x)
    for h in trace.hidden_states:
        assert np.all(h.data == 0.0)


@pytest.mark.parametrize("n", [16, 64, 256])
def test_mamba_retained_state_is_length_independent(mamba_config, mamba_weights, n):
    m = T.AllocationMeter()
    trace = forward(mamba_config, mamba_weights, np.arange(n) % 256, meter=m)
    c = mamba_config
    assert m.tagged("ssm_state") == c.layers * c.d_state * c.d_inner * 4
    assert len(trace.final_states) == c.layers


def test_mamba_final_state_matches_scan_state(mamba_config, mamba_weights):
    trace = forward(mamba_config, mamba_weights, np.arange(20), collect=("hidden",))
    assert trace.final_states[0].shape == (mamba_config.d_inner, mamba_config.d_state)


def test_both_models_consume_identical_sequences(corpus_dir):
    from scalebench.corpus import load_corpus, prepare_sequence, sequence_hash

    corpus = load_corpus(corpus_dir)
    assert sequence_hash(prepare_sequence(corpus, 300)) == sequence_hash(prepare_sequence(corpus, 300))
