import math

from dataclasses import dataclass
from typing import Optional

import numpy as np

from mstat.tensor import Tensor, parameter, matmul, reshape, swapaxes, concat, softmax_axis, getitem, record_attention
from mstat.layers._mixin import ParamMixin, xavier
from mstat.util.exceptions import ConfigError, DimensionError, EmptyInputError

def default_heads(dim):
    return max(1, dim // 64)

class AttentionParams(ParamMixin):
    """
    Projections of one multi-head self-attention.
    ``w_q``, ``w_k`` and ``w_v`` hold the per-head d x d' matrices side by side, so each is d x d

    :param dim: token width d
    :param heads: head count n, must divide d
    :param rng: initializer stream

    :type dim: int
    :type heads: int
    :type rng: numpy.random.Generator
    """
    def __init__(self, dim, heads, rng, module_id = ""):
        super().__init__(module_id)

        if heads < 1 or dim % heads:
            raise ConfigError(f"token width {dim} is not divisible by {heads} heads")

        self.dim = dim
        self.heads = heads

        self.w_q = parameter(xavier(rng, dim, dim))
        self.w_k = parameter(xavier(rng, dim, dim))
        self.w_v = parameter(xavier(rng, dim, dim))
        self.w_o = parameter(xavier(rng, dim, dim))
        self.b_o = parameter(np.zeros(dim))

    @property
    def head_dim(self):
        return self.dim // self.heads

@dataclass
class TokenSeq:
    """
    Spatio-temporal token sequence.

    ``tokens`` is (..., T, N, d). ``class_token`` is (..., d), or None.
    ``frame_class`` holds per-frame class copies (..., T, d) between broadcast and averaging
    """
    tokens: Tensor
    class_token: Optional[Tensor] = None
    frame_class: Optional[Tensor] = None

    def __post_init__(self):
        if self.tokens.ndim < 3:
            raise DimensionError(f"token sequence needs rank >= 3 (T, N, d), got {self.tokens.shape}")

        if self.class_token is not None and self.class_token.shape[-1] != self.d:
            raise DimensionError(f"class token width {self.class_token.shape[-1]} != token width {self.d}")

        if self.frame_class is not None and self.frame_class.shape[-2:] != (self.T, self.d):
            raise DimensionError(f"per-frame class copies {self.frame_class.shape} do not match ({self.T}, {self.d})")

    @property
    def T(self):
        return self.tokens.shape[-3]

    @property
    def N(self):
        return self.tokens.shape[-2]

    @property
    def d(self):
        return self.tokens.shape[-1]

def split_heads(x, heads):
    """
    (..., L, d) -> (..., n, L, d')
    """
    lead, length, dim = x.shape[:-2], x.shape[-2], x.shape[-1]
    return swapaxes(reshape(x, lead + (length, heads, dim // heads)), -2, -3)

def merge_heads(x):
    """
    (..., n, L, d') -> (..., L, d)
    """
    moved = swapaxes(x, -2, -3)
    return reshape(moved, moved.shape[:-2] + (moved.shape[-2] * moved.shape[-1],))

def attend(q, k, v, module_id = ""):
    """
    softmax(q k^T / sqrt(d')) v with the softmax over the key axis

    :returns: aggregated values and the attention map
    :rtype: tuple<Tensor, Tensor>
    """
    scores = matmul(q, swapaxes(k, -1, -2), tag = "attn") * (1 / math.sqrt(q.shape[-1]))
    weights = softmax_axis(scores, -1)
    record_attention(module_id, weights.data)

    return matmul(weights, v, tag = "attn"), weights

def self_attention(s, params):
    """
    Multi-head self-attention over the second to last axis of ``s``.
    Leading axes are independent sequences

    :param s: tokens (..., N, d)
    :param params: projections

    :type s: Tensor
    :type params: AttentionParams

    :returns: tokens with the shape of ``s``
    :rtype: Tensor
    """
    if s.shape[-2] == 0:
        raise EmptyInputError("self-attention over an empty sequence")

    if s.shape[-1] != params.dim:
        raise DimensionError(f"token width {s.shape[-1]} != attention width {params.dim}")

    q = split_heads(matmul(s, params.w_q), params.heads)
    k = split_heads(matmul(s, params.w_k), params.heads)
    v = split_heads(matmul(s, params.w_v), params.heads)

    out, _ = attend(q, k, v, params.module_id)

    return matmul(merge_heads(out), params.w_o) + params.b_o

def temporal_attention(seq, params):
    """
    N independent attentions of length T, one per spatial position. The class token is not touched

    :type seq: TokenSeq
    :type params: AttentionParams

    :rtype: TokenSeq
    """
    if seq.T == 0:
        raise EmptyInputError("temporal attention over zero frames")

    streams = swapaxes(seq.tokens, -3, -2)
    out = swapaxes(self_attention(streams, params), -3, -2)

    return TokenSeq(out, class_token = seq.class_token, frame_class = seq.frame_class)

def spatial_attention(seq, params):
    """
    T independent attentions, one per frame, over that frame's tokens.
    When ``frame_class`` is set each frame attends over its N tokens plus its class copy, appended last

    :type seq: TokenSeq
    :type params: AttentionParams

    :rtype: TokenSeq
    """
    if seq.N == 0:
        raise EmptyInputError("spatial attention over frames without tokens")

    if seq.frame_class is None:
        return TokenSeq(self_attention(seq.tokens, params), class_token = seq.class_token)

    copies = reshape(seq.frame_class, seq.frame_class.shape[:-1] + (1, seq.d))
    out = self_attention(concat([seq.tokens, copies], axis = -2), params)

    tokens = getitem(out, (Ellipsis, slice(0, seq.N), slice(None)))
    frame_class = getitem(out, (Ellipsis, seq.N, slice(None)))

    return TokenSeq(tokens, class_token = seq.class_token, frame_class = frame_class)
