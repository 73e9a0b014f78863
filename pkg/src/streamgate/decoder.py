"""Minimal deterministic recurrent cross-attention decoder.

Stands in for a full pretrained encoder/decoder stack: a fixed linear
encoder projects observations into feature space, and each decoder layer
lets the persistent-state tokens attend over the frame tokens (queries
from state, keys/values from frame, scaled dot-product softmax). The
per-layer attention maps are exposed for the spatial gate.

The per-layer token update is a relevance-gated leaky residual,

    tokens += RESIDUAL_RATE * gate * (attention @ values - tokens),

where gate = sigmoid(GATE_GAIN * (max_score - GATE_BIAS)) per token. A
trained decoder learns to leave disengaged tokens alone; the gate is the
training-free stand-in for that selectivity, and the leaky form keeps
activations bounded (a plain accumulating residual grows token norms
without bound, saturating both the attention and any scale-aligned
readout).

Before the cross-attention layers, each decode pass rotates every state
token slightly toward the shared token-mean direction (norm-preserving,
so token energy is conserved). This stands in for the state
self-attention of a real recurrent decoder and is the reason repeated
re-encoding is lossy: a token whose region is not being observed cannot
be re-anchored, so whatever fraction of the proposal the update commits,
that fraction of the token's distinctive content has been smeared away.
Full replacement therefore forgets unobserved regions at the mixing
rate, which is precisely the failure mode the adaptive gates are meant
to mitigate.

Because nothing here is trained, the generated weights are also chosen so
content addressing works out of the box: query and key share one random
projection per layer (independent random Q/K destroy the inner-product
structure attention needs), and the value/readout maps are identity so
state tokens hold, and are read out in, the encoder's feature basis.
Hand-constructed weights with arbitrary matrices remain fully supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .gating import AttentionTrace, AttnSource
from .linalg import F32, as_matrix, matmul, row_softmax, rowwise_max, sigmoid

# Fraction of the gap between a token and its retrieved value closed per
# layer, plus the score level below which a token counts as disengaged and
# the steepness of that cutoff. GATE_BIAS sits above the spurious-match
# score band so no token can be captured by a lookalike region, yet below
# the self-match band so observed tokens keep updating.
RESIDUAL_RATE = 0.15
GATE_BIAS = 10.0
GATE_GAIN = 2.0

# Variance gain of generated query/key projections; sharpens attention so
# a token whose content matches a frame row dominates its softmax row.
SCORE_GAIN = 2.0

# Relative size of the random part of generated query/key projections.
# Near-identity projections keep spurious token/frame score correlations
# small (a fully random projection adds score noise comparable to the
# content signal) while still giving each layer a distinct attention map.
QK_JITTER = 0.1

# Per-pass rotation of each state token toward the token-mean direction;
# the lossy re-encoding channel described in the module docstring.
MIX_RATE = 0.03


@dataclass(frozen=True)
class DecoderWeights:
    """Immutable projection matrices for an L-layer decoder.

    query/key/value hold one C x C matrix per layer; readout is C x C;
    encoder maps observation channels to feature channels (C_obs x C).
    """

    query: tuple[np.ndarray, ...]
    key: tuple[np.ndarray, ...]
    value: tuple[np.ndarray, ...]
    readout: np.ndarray
    encoder: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        query = tuple(as_matrix(m, "query") for m in self.query)
        key = tuple(as_matrix(m, "key") for m in self.key)
        value = tuple(as_matrix(m, "value") for m in self.value)
        if not query:
            raise ConfigError("decoder needs at least one layer")
        if not (len(query) == len(key) == len(value)):
            raise ConfigError("query/key/value layer counts differ")
        c = query[0].shape[1]
        for m in (*query, *key, *value):
            if m.shape != (c, c):
                raise ConfigError(f"projection must be {c}x{c}, got {m.shape}")
        readout = as_matrix(self.readout, "readout")
        if readout.shape != (c, c):
            raise ConfigError(f"readout must be {c}x{c}, got {readout.shape}")
        encoder = as_matrix(self.encoder, "encoder")
        if encoder.shape[1] != c:
            raise ConfigError(
                f"encoder must have {c} output channels, got {encoder.shape[1]}"
            )
        object.__setattr__(self, "query", query)
        object.__setattr__(self, "key", key)
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "readout", readout)
        object.__setattr__(self, "encoder", encoder)

    @property
    def n_layers(self) -> int:
        return len(self.query)

    @property
    def channels(self) -> int:
        return self.query[0].shape[1]

    @property
    def obs_channels(self) -> int:
        return self.encoder.shape[0]


@dataclass(frozen=True)
class DecodeOutput:
    """Candidate state plus the per-layer trace and feature stack."""

    candidate: np.ndarray
    trace: AttentionTrace
    layer_features: tuple[np.ndarray, ...]


def make_weights(
    n_layers: int = 4,
    channels: int = 32,
    obs_channels: int | None = None,
    seed: int = 0,
) -> DecoderWeights:
    """Generate deterministic decoder weights from a seed.

    The encoder projection is a random semi-orthogonal matrix (QR of a
    Gaussian draw), which preserves inner products exactly rather than
    just in expectation; per-layer query projections are sqrt(SCORE_GAIN)
    times a jittered identity so generated attention is sharp and nearly
    free of spurious correlations; key shares the query projection and
    value/readout are identity (see the module docstring for why a
    training-free decoder needs this).
    """
    if n_layers < 1:
        raise ConfigError(f"n_layers must be >= 1, got {n_layers}")
    if channels < 1:
        raise ConfigError(f"channels must be >= 1, got {channels}")
    if obs_channels is None:
        obs_channels = channels
    if obs_channels < 1:
        raise ConfigError(f"obs_channels must be >= 1, got {obs_channels}")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x57A7E)))
    eye = np.eye(channels, dtype=F32)
    q_gain = math.sqrt(SCORE_GAIN)
    jitter_scale = QK_JITTER / math.sqrt(channels)
    query = tuple(
        (
            q_gain * (eye + jitter_scale * rng.standard_normal((channels, channels)))
        ).astype(F32)
        for _ in range(n_layers)
    )
    encoder = _semi_orthogonal(rng, obs_channels, channels)
    return DecoderWeights(
        query=query,
        key=query,
        value=tuple(eye for _ in range(n_layers)),
        readout=eye,
        encoder=encoder,
        seed=int(seed),
    )


def encode_frame(observation, weights: DecoderWeights) -> np.ndarray:
    """Project a K x C_obs observation to K x C frame tokens."""
    observation = as_matrix(observation, "observation")
    if observation.shape[1] != weights.obs_channels:
        raise ConfigError(
            f"observation has {observation.shape[1]} channels, encoder "
            f"expects {weights.obs_channels}"
        )
    return matmul(observation, weights.encoder)


def decode_step(
    frame,
    state,
    weights: DecoderWeights,
    attn_source: AttnSource = AttnSource.POST_SOFTMAX,
) -> DecodeOutput:
    """Run one recurrent decode: state tokens attend over frame tokens.

    First each token is rotated by MIX_RATE toward the token-mean
    direction (at its own norm, rescaled back to that norm afterwards).
    Then per layer: scores = (state @ Wq)(frame @ Wk)^T / sqrt(C),
    attention = row_softmax(scores), gate = sigmoid(GATE_GAIN *
    (rowmax(scores) - GATE_BIAS)), and tokens += RESIDUAL_RATE * gate *
    (attention @ (frame @ Wv) - tokens). The trace records attention
    probabilities, or the raw scaled scores when attn_source is
    PRE_SOFTMAX_ABS.
    """
    frame = as_matrix(frame, "frame")
    state = as_matrix(state, "state")
    c = weights.channels
    if frame.shape[1] != c or state.shape[1] != c:
        raise ConfigError(
            f"frame/state channel mismatch: frame {frame.shape}, state "
            f"{state.shape}, weights expect {c} channels"
        )
    scale = F32(1.0 / math.sqrt(c))
    tokens = _mix_tokens(state)
    traced: list[np.ndarray] = []
    features: list[np.ndarray] = []
    for wq, wk, wv in zip(weights.query, weights.key, weights.value):
        q = matmul(tokens, wq)
        k = matmul(frame, wk)
        scores = matmul(q, k.T) * scale
        attn = row_softmax(scores)
        traced.append(scores if attn_source is AttnSource.PRE_SOFTMAX_ABS else attn)
        gate = sigmoid(F32(GATE_GAIN) * (rowwise_max(scores) - F32(GATE_BIAS)))
        retrieved = matmul(attn, matmul(frame, wv))
        tokens = tokens + F32(RESIDUAL_RATE) * gate[:, np.newaxis] * (retrieved - tokens)
        features.append(tokens.copy())
    return DecodeOutput(
        candidate=tokens,
        trace=AttentionTrace(tuple(traced)),
        layer_features=tuple(features),
    )


def _semi_orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Random rows x cols matrix with orthonormal rows (or columns if tall)."""
    if rows <= cols:
        q, _ = np.linalg.qr(rng.standard_normal((cols, rows)))
        return np.ascontiguousarray(q[:, :rows].T.astype(F32))
    q, _ = np.linalg.qr(rng.standard_normal((rows, cols)))
    return np.ascontiguousarray(q[:, :cols].astype(F32))


def _mix_tokens(state: np.ndarray) -> np.ndarray:
    """Norm-preserving rotation of each token toward the mean direction."""
    mean = state.mean(axis=0)
    mean_norm = float(np.sqrt((mean * mean).sum()))
    if mean_norm == 0.0:
        return state.copy()
    orig = np.sqrt((state * state).sum(axis=1, keepdims=True))
    target = (mean / F32(mean_norm))[np.newaxis, :] * orig
    mixed = state + F32(MIX_RATE) * (target - state)
    new = np.sqrt((mixed * mixed).sum(axis=1, keepdims=True))
    safe = np.where(new > 0, new, F32(1.0))
    return mixed * (orig / safe)


def readout(candidate, weights: DecoderWeights) -> np.ndarray:
    """Linear per-token estimate from the candidate state (N x C)."""
    candidate = as_matrix(candidate, "candidate")
    if candidate.shape[1] != weights.channels:
        raise ConfigError(
            f"candidate has {candidate.shape[1]} channels, readout expects "
            f"{weights.channels}"
        )
    return matmul(candidate, weights.readout)
