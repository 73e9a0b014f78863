import numpy as np
import pytest

from streamgate.decoder import (
    DecoderWeights,
    decode_step,
    encode_frame,
    make_weights,
    readout,
)
from streamgate.errors import ConfigError
from streamgate.gating import AttnSource
from streamgate import oracle
import streamgate.decoder as decoder_mod

F32 = np.float32


def identity_weights(channels=2, n_layers=1):
    eye = np.eye(channels, dtype=F32)
    return DecoderWeights(
        query=(eye,) * n_layers,
        key=(eye,) * n_layers,
        value=(eye,) * n_layers,
        readout=eye,
        encoder=eye,
    )


def test_make_weights_deterministic():
    a = make_weights(3, 16, 8, seed=42)
    b = make_weights(3, 16, 8, seed=42)
    for ma, mb in zip(a.query, b.query):
        assert ma.tobytes() == mb.tobytes()
    assert a.encoder.tobytes() == b.encoder.tobytes()
    c = make_weights(3, 16, 8, seed=43)
    assert a.encoder.tobytes() != c.encoder.tobytes()


def test_make_weights_shapes_and_validation():
    w = make_weights(2, 8, 6, seed=0)
    assert w.n_layers == 2 and w.channels == 8 and w.obs_channels == 6
    assert all(m.shape == (8, 8) for m in (*w.query, *w.key, *w.value))
    assert w.readout.shape == (8, 8) and w.encoder.shape == (6, 8)
    with pytest.raises(ConfigError):
        make_weights(0, 8)
    with pytest.raises(ConfigError):
        make_weights(2, 0)


def test_make_weights_encoder_preserves_norms():
    w = make_weights(2, 32, 32, seed=1)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 32)).astype(F32)
    np.testing.assert_allclose(
        np.linalg.norm(x @ w.encoder, axis=1), np.linalg.norm(x, axis=1), rtol=1e-4
    )


def test_decoder_weights_validation():
    eye = np.eye(2, dtype=F32)
    with pytest.raises(ConfigError):
        DecoderWeights(query=(), key=(), value=(), readout=eye, encoder=eye)
    with pytest.raises(ConfigError):
        DecoderWeights(query=(eye,), key=(eye, eye), value=(eye,), readout=eye, encoder=eye)
    with pytest.raises(ConfigError):
        DecoderWeights(query=(eye,), key=(eye,), value=(eye,), readout=np.eye(3, dtype=F32), encoder=eye)


def test_encode_frame_linearity_and_determinism():
    w = make_weights(2, 8, 6, seed=5)
    zero = encode_frame(np.zeros((4, 6), dtype=F32), w)
    np.testing.assert_array_equal(zero, np.zeros((4, 8), dtype=F32))
    rng = np.random.default_rng(2)
    obs = rng.standard_normal((4, 6)).astype(F32)
    once = encode_frame(obs, w)
    assert once.tobytes() == encode_frame(obs, w).tobytes()
    np.testing.assert_allclose(encode_frame(2 * obs, w), 2 * once, rtol=1e-6)


def test_encode_frame_channel_mismatch():
    w = make_weights(2, 8, 6, seed=5)
    with pytest.raises(ConfigError):
        encode_frame(np.zeros((4, 5), dtype=F32), w)


def test_decode_step_single_key_attention_is_one():
    w = identity_weights(channels=2)
    out = decode_step(np.ones((1, 2), dtype=F32), np.ones((3, 2), dtype=F32), w)
    np.testing.assert_array_equal(out.trace.layers[0], np.ones((3, 1), dtype=F32))


def test_decode_step_attention_rows_sum_to_one():
    w = make_weights(3, 8, 8, seed=9)
    rng = np.random.default_rng(3)
    frame = rng.standard_normal((5, 8)).astype(F32)
    state = rng.standard_normal((4, 8)).astype(F32)
    out = decode_step(frame, state, w)
    assert out.trace.layer_count == 3
    assert len(out.layer_features) == 3
    for layer in out.trace.layers:
        assert (layer >= 0).all()
        np.testing.assert_allclose(layer.sum(axis=1), np.ones(4), atol=1e-5)


def test_decode_step_frozen_scalar_example():
    # L=1, N=1, K=2, C=2, identity weights; expected values computed with
    # the scalar oracle (scores [2sqrt2, sqrt2], gate almost closed).
    w = identity_weights(channels=2)
    out = decode_step([[2.0, 0.0], [0.0, 2.0]], [[2.0, 1.0]], w)
    np.testing.assert_allclose(
        out.trace.layers[0], [[0.804429682507, 0.195570317493]], atol=1e-5
    )
    np.testing.assert_allclose(
        out.candidate, [[1.999999965384, 0.999999946116]], atol=1e-5
    )


def test_decode_step_candidate_shape_matches_state():
    w = make_weights(2, 8, 8, seed=4)
    rng = np.random.default_rng(4)
    out = decode_step(
        rng.standard_normal((6, 8)).astype(F32),
        rng.standard_normal((5, 8)).astype(F32),
        w,
    )
    assert out.candidate.shape == (5, 8)
    assert all(f.shape == (5, 8) for f in out.layer_features)


def test_decode_step_deterministic():
    w = make_weights(2, 8, 8, seed=6)
    rng = np.random.default_rng(5)
    frame = rng.standard_normal((3, 8)).astype(F32)
    state = rng.standard_normal((4, 8)).astype(F32)
    assert decode_step(frame, state, w).candidate.tobytes() == decode_step(frame, state, w).candidate.tobytes()


def test_decode_step_channel_mismatch():
    w = make_weights(2, 8, 8, seed=6)
    with pytest.raises(ConfigError):
        decode_step(np.zeros((3, 7), dtype=F32), np.zeros((4, 8), dtype=F32), w)


def test_decode_step_pre_softmax_trace_carries_raw_scores():
    w = make_weights(1, 8, 8, seed=7)
    rng = np.random.default_rng(6)
    frame = rng.standard_normal((5, 8)).astype(F32)
    state = rng.standard_normal((4, 8)).astype(F32)
    post = decode_step(frame, state, w, AttnSource.POST_SOFTMAX)
    pre = decode_step(frame, state, w, AttnSource.PRE_SOFTMAX_ABS)
    assert (pre.trace.layers[0] < 0).any()
    assert (post.trace.layers[0] >= 0).all()
    # same candidate either way; the source only changes what is traced
    assert post.candidate.tobytes() == pre.candidate.tobytes()


def test_readout_identity_zero_and_determinism():
    w = identity_weights(channels=4)
    rng = np.random.default_rng(7)
    cand = rng.standard_normal((3, 4)).astype(F32)
    np.testing.assert_array_equal(readout(cand, w), cand)
    np.testing.assert_array_equal(
        readout(np.zeros((3, 4), dtype=F32), w), np.zeros((3, 4), dtype=F32)
    )
    w2 = make_weights(1, 8, 8, seed=11)
    cand2 = rng.standard_normal((3, 8)).astype(F32)
    assert readout(cand2, w2).tobytes() == readout(cand2, w2).tobytes()
    with pytest.raises(ConfigError):
        readout(np.zeros((3, 7), dtype=F32), w2)


def test_decode_step_matches_scalar_oracle_small_instances():
    rng = np.random.default_rng(123)
    for _ in range(50):
        n, k, c, n_layers = (int(rng.integers(1, 4)) for _ in range(4))
        mats = lambda: tuple(rng.standard_normal((c, c)).astype(F32) for _ in range(n_layers))
        query, key, value = mats(), mats(), mats()
        w = DecoderWeights(
            query=query, key=key, value=value,
            readout=np.eye(c, dtype=F32), encoder=np.eye(c, dtype=F32),
        )
        frame = rng.standard_normal((k, c)).astype(F32)
        state = rng.standard_normal((n, c)).astype(F32)
        out = decode_step(frame, state, w)
        expected, attn = oracle.o_decode_step(
            frame.tolist(), state.tolist(),
            [m.tolist() for m in query], [m.tolist() for m in key], [m.tolist() for m in value],
            decoder_mod.RESIDUAL_RATE, decoder_mod.GATE_BIAS, decoder_mod.GATE_GAIN,
            decoder_mod.MIX_RATE,
        )
        np.testing.assert_allclose(out.candidate, expected, rtol=1e-4, atol=1e-5)
        for got, exp in zip(out.trace.layers, attn):
            np.testing.assert_allclose(got, exp, rtol=1e-4, atol=1e-5)
