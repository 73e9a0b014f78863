"""Adaptive per-token update gates for a streaming persistent state.

The persistent state is an N x C token matrix carried across frames. Each
frame the decoder proposes a candidate state; the gates below decide, token
by token, how much of the candidate to commit:

* temporal gate   -- mean-normalized per-token change between consecutive
                     candidate states, pushed through a thresholded sigmoid.
                     Tokens that barely move are preserved; tokens that move
                     a lot absorb the new observation.
* spatial gate    -- layer-averaged cross-attention times per-frame-token
                     feature divergence, max-pooled over frame tokens, then
                     a sigmoid. Tokens attending strongly to changing
                     observations update; tokens tied to stable or
                     irrelevant content are preserved.
* fused gate      -- elementwise product of the two, so a token updates only
                     when both signals agree.

The committed state is the per-token convex combination
``mask * candidate + (1 - mask) * previous``. The uniform (all-ones) mask
reproduces plain full-replacement recurrence.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, StateError
from .linalg import (
    F32,
    as_matrix,
    as_vector,
    col_broadcast_mul,
    rowwise_cosine,
    rowwise_l2,
    rowwise_max,
    sigmoid,
)


class MaskKind(enum.Enum):
    TEMPORAL = "temporal"
    SPATIAL = "spatial"
    FUSED = "fused"
    UNIFORM = "uniform"


class AttnSource(enum.Enum):
    """Which decoder quantity the attention trace records.

    POST_SOFTMAX traces are nonnegative attention probabilities.
    PRE_SOFTMAX_ABS traces carry raw (possibly signed) scaled scores; the
    absolute value is applied at aggregation time.
    """

    POST_SOFTMAX = "post"
    PRE_SOFTMAX_ABS = "preabs"


class Strategy(enum.Enum):
    UNIFORM = "uniform"
    TEMPORAL_ONLY = "temporal"
    SPATIAL_ONLY = "spatial"
    FUSED = "fused"


@dataclass(frozen=True)
class GateConfig:
    """Knobs of the gating mechanism.

    tau is the temporal threshold: normalized deltas sit around 1, so the
    default gates at "above-average change". eps_mean guards the
    normalizing division when all deltas vanish. spat_gain / spat_bias
    rescale the pooled spatial activation before its sigmoid (defaults
    implement the plain form, which confines the spatial gate to
    [0.5, 1) on nonnegative input).
    """

    tau: float = 1.0
    eps_mean: float = 1e-8
    spat_gain: float = 1.0
    spat_bias: float = 0.0
    attn_source: AttnSource = AttnSource.POST_SOFTMAX

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ConfigError(f"tau must be > 0, got {self.tau}")
        if not self.eps_mean > 0:
            raise ConfigError(f"eps_mean must be > 0, got {self.eps_mean}")
        if not self.spat_gain > 0:
            raise ConfigError(f"spat_gain must be > 0, got {self.spat_gain}")


@dataclass(frozen=True)
class UpdateMask:
    """Per-token gate in [0, 1] plus the route that produced it."""

    values: np.ndarray
    kind: MaskKind

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", as_vector(self.values, "mask"))
        if self.values.shape[0] < 1:
            raise ConfigError("mask must have at least one entry")

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class AttentionTrace:
    """Per-decoder-layer N x K cross-attention magnitudes."""

    layers: tuple[np.ndarray, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        layers = tuple(as_matrix(m, "attention layer") for m in self.layers)
        if not layers:
            raise ConfigError("attention trace must contain at least one layer")
        shape = layers[0].shape
        for m in layers[1:]:
            if m.shape != shape:
                raise ConfigError(
                    f"attention layers disagree on shape: {shape} vs {m.shape}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def layer_count(self) -> int:
        return len(self.layers)


def temporal_mask(curr, prev, cfg: GateConfig) -> UpdateMask:
    """Gate from mean-normalized per-token candidate deltas.

    delta[i] = |curr_i - prev_i|_2, normalized by its mean over tokens
    (falling back to all-ones when the mean is below cfg.eps_mean), then
    mask[i] = sigmoid(normalized_delta[i] - tau).
    """
    curr = as_matrix(curr, "curr")
    prev = as_matrix(prev, "prev")
    if curr.shape != prev.shape:
        raise ConfigError(
            f"temporal_mask shape mismatch: {curr.shape} vs {prev.shape}"
        )
    delta = rowwise_l2(curr - prev)
    mu = float(delta.mean())
    if mu >= cfg.eps_mean:
        normalized = delta / F32(mu)
    else:
        normalized = np.ones_like(delta)
    return UpdateMask(sigmoid(normalized - F32(cfg.tau)), MaskKind.TEMPORAL)


def feature_divergence(curr, prev) -> np.ndarray:
    """Per-frame-token dissimilarity: 1 - cosine of consecutive frames."""
    return F32(1.0) - rowwise_cosine(curr, prev)


def aggregate_attention(trace: AttentionTrace) -> np.ndarray:
    """Elementwise mean of absolute per-layer attention matrices."""
    stacked = np.stack([np.abs(m) for m in trace.layers], axis=0)
    return stacked.mean(axis=0)


def spatial_mask(attn, divergence, cfg: GateConfig) -> UpdateMask:
    """Gate from attention-weighted divergence, max-pooled over frame tokens.

    raw[i] = max_k attn[i, k] * divergence[k];
    mask[i] = sigmoid(spat_gain * raw[i] + spat_bias).
    """
    attn = as_matrix(attn, "attn")
    divergence = as_vector(divergence, "divergence")
    if attn.shape[1] != divergence.shape[0]:
        raise ConfigError(
            f"spatial_mask dimension mismatch: attention is {attn.shape}, "
            f"divergence has {divergence.shape[0]} entries"
        )
    if attn.size and attn.min() < 0:
        raise ConfigError("spatial_mask requires nonnegative attention")
    raw = rowwise_max(col_broadcast_mul(attn, divergence))
    gated = sigmoid(F32(cfg.spat_gain) * raw + F32(cfg.spat_bias))
    return UpdateMask(gated, MaskKind.SPATIAL)


def fuse_masks(temporal: UpdateMask, spatial: UpdateMask) -> UpdateMask:
    """Elementwise product of a temporal and a spatial mask."""
    if temporal.kind is not MaskKind.TEMPORAL:
        raise ConfigError(f"expected a temporal mask, got kind={temporal.kind.value}")
    if spatial.kind is not MaskKind.SPATIAL:
        raise ConfigError(f"expected a spatial mask, got kind={spatial.kind.value}")
    if len(temporal) != len(spatial):
        raise ConfigError(
            f"fuse_masks length mismatch: {len(temporal)} vs {len(spatial)}"
        )
    return UpdateMask(temporal.values * spatial.values, MaskKind.FUSED)


def apply_update(candidate, prev_state, mask: UpdateMask) -> np.ndarray:
    """Commit the candidate per token: mask*candidate + (1-mask)*previous.

    Each output coordinate is clamped to the closed interval spanned by the
    two inputs, so the convex-combination postcondition holds exactly in
    float32.
    """
    candidate = as_matrix(candidate, "candidate")
    prev_state = as_matrix(prev_state, "prev_state")
    if candidate.shape != prev_state.shape:
        raise ConfigError(
            f"apply_update shape mismatch: {candidate.shape} vs {prev_state.shape}"
        )
    m = mask.values
    if m.shape[0] != candidate.shape[0]:
        raise ConfigError(
            f"apply_update mask length {m.shape[0]} != token count "
            f"{candidate.shape[0]}"
        )
    if m.min() < 0 or m.max() > 1:
        raise ConfigError("apply_update mask values must lie in [0, 1]")
    w = m[:, np.newaxis]
    raw = w * candidate + (F32(1.0) - w) * prev_state
    lo = np.minimum(candidate, prev_state)
    hi = np.maximum(candidate, prev_state)
    return np.clip(raw, lo, hi)


def uniform_mask(n: int) -> UpdateMask:
    """All-ones mask of length n (full-replacement recurrence)."""
    if n < 1:
        raise ConfigError(f"uniform_mask requires n >= 1, got {n}")
    return UpdateMask(np.ones(n, dtype=F32), MaskKind.UNIFORM)


def gate_step(
    candidate,
    prev_state,
    frame,
    trace: AttentionTrace,
    cfg: GateConfig,
    strategy: Strategy,
    *,
    prev_candidate=None,
    prev_frame=None,
) -> tuple[np.ndarray, UpdateMask]:
    """One full gated state update; returns (new_state, mask_used).

    On the first frame of a stream both buffers are absent and the uniform
    mask is used regardless of strategy, so the initial observation is
    written in full. Supplying exactly one of the two buffers means the
    caller's session bookkeeping is broken and raises StateError.
    """
    candidate = as_matrix(candidate, "candidate")
    if (prev_candidate is None) != (prev_frame is None):
        raise StateError(
            "prev_candidate and prev_frame must both be absent (first frame) "
            "or both be present"
        )
    first_frame = prev_candidate is None

    if first_frame or strategy is Strategy.UNIFORM:
        mask = uniform_mask(candidate.shape[0])
    elif strategy is Strategy.TEMPORAL_ONLY:
        mask = temporal_mask(candidate, prev_candidate, cfg)
    elif strategy is Strategy.SPATIAL_ONLY:
        mask = _spatial_route(frame, prev_frame, trace, cfg)
    elif strategy is Strategy.FUSED:
        mask = fuse_masks(
            temporal_mask(candidate, prev_candidate, cfg),
            _spatial_route(frame, prev_frame, trace, cfg),
        )
    else:  # pragma: no cover - enum is closed
        raise ConfigError(f"unknown strategy {strategy!r}")

    return apply_update(candidate, prev_state, mask), mask


def _spatial_route(frame, prev_frame, trace: AttentionTrace, cfg: GateConfig) -> UpdateMask:
    divergence = feature_divergence(frame, prev_frame)
    return spatial_mask(aggregate_attention(trace), divergence, cfg)
