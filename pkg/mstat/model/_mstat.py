import logging

import numpy as np

from dataclasses import dataclass, field
from typing import Optional

from mstat.tensor import Tensor, parameter, reshape, transpose, concat, getitem, as_tensor
from mstat.layers import (
    ParamMixin, Linear, LayerNormParams, TokenSeq, StaBlock, AStaBlock, AapBank, IapBank,
    sta_block, a_sta_block, aap_forward, iap_forward
)
from mstat.augment import tps_apply
from mstat.util.exceptions import ConfigError, DimensionError, DegenerateInputError

logger = logging.getLogger(__name__)

stage_names = ("I", "II", "III")

stage_masks = (
    "I",
    "II",
    "III",
    "I+II",
    "I+III",
    "II+III",
    "I+II+III"
)

def parse_stages(mask):
    """
    "I+III" -> ("I", "III"). Accepts an iterable of stage names too
    """
    parts = mask.split("+") if isinstance(mask, str) else list(mask)
    parts = [part.strip().upper() for part in parts if part.strip()]

    unknown = [part for part in parts if part not in stage_names]

    if unknown or not parts:
        raise ConfigError(f"stage mask {mask!r} must combine {', '.join(stage_names)} with '+'")

    return tuple(name for name in stage_names if name in parts)

@dataclass
class StageOutputs:
    """
    Per-stage representations of a batch.

    ``attr_rep`` is the flattened Stage-I attribute pooling (B, N_a d), None when that branch is off.
    ``c2`` and ``c3`` are the re-coded class tokens of Stage II and III (B, d).
    ``logits`` holds the classifier output of every supervised head
    """
    attr_rep: Optional[Tensor]
    c2: Tensor
    c3: Tensor
    logits: dict = field(default_factory = dict)

    def features(self):
        heads = {"stage2": self.c2, "stage3": self.c3}

        if self.attr_rep is not None:
            heads = {"attr": self.attr_rep, **heads}

        return heads

    def stage(self, name):
        return {"I": self.attr_rep, "II": self.c2, "III": self.c3}[name]

def patchify(video, patch):
    """
    Cut every frame into non-overlapping patch x patch squares, row-major, each flattened channel first

    :param video: frames (..., T, 3, H, W)
    :param patch: P

    :type video: Tensor
    :type patch: int

    :returns: patches (..., T, N, 3 P^2)
    :rtype: Tensor
    """
    video = as_tensor(video)
    *lead, channels, height, width = video.shape

    if height % patch or width % patch:
        raise ConfigError(f"frame {height}x{width} is not divisible into {patch}px patches")

    rows, columns = height // patch, width // patch
    lead = tuple(lead)
    k = len(lead)

    grid = reshape(video, lead + (channels, rows, patch, columns, patch))
    order = tuple(range(k)) + (k + 1, k + 3, k, k + 2, k + 4)

    return reshape(transpose(grid, order), lead + (rows * columns, channels * patch * patch))

def patchify_embed(video, projection, patch):
    """
    :param video: frames (..., T, 3, H, W)
    :param projection: linear map 3 P^2 -> d
    :param patch: P

    :type video: Tensor or numpy.ndarray
    :type projection: Linear
    :type patch: int

    :returns: patch tokens (..., T, N, d)
    :rtype: Tensor
    """
    return projection(patchify(video, patch))

def add_spatial_pos(tokens, table):
    """
    Add the same positional row to position n of every frame. There is no temporal encoding

    :param tokens: (..., T, N, d)
    :param table: E (N, d)

    :rtype: Tensor
    """
    if tuple(table.shape) != tuple(tokens.shape[-2:]):
        raise DimensionError(f"positional table {table.shape} does not match tokens {tokens.shape[-2:]}")

    return tokens + table

def _batched_token(token, batch):
    single = reshape(token, (1, token.shape[-1]))
    return concat([single] * batch, axis = 0)

class MstatModel(ParamMixin):
    """
    Three-stage spatio-temporal network.

    Stage I runs STA blocks over the embedded clip and pools the result into attribute tokens.
    Stage II continues with more STA blocks on the same stream and re-codes the class token
    through identity prototypes. Stage III swaps in a fresh class token, runs A-STA blocks and
    re-codes again. Each stage representation has its own classifier head behind a layer norm

    :param cfg: network shape
    :param num_classes: training identities
    :param rng: initializer stream

    :type cfg: ModelConfig
    :type num_classes: int
    :type rng: numpy.random.Generator
    """
    def __init__(self, cfg, num_classes, rng):
        super().__init__("mstat")

        if num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, not {num_classes}")

        self.config = cfg
        self.num_classes = num_classes

        dim, heads, count = cfg.dim, cfg.head_count, cfg.tokens_per_frame

        self.embed = Linear(dim, dim, rng)
        self.pos = parameter(rng.normal(0, 0.02, size = (count, dim)))
        self.class_token = parameter(rng.normal(0, 0.02, size = dim))

        self.stage1 = [StaBlock(dim, heads, rng, mlp = cfg.block_mlp, module_id = f"stage1.{i}") for i in range(cfg.depth_stage1)]
        self.norm_aap = LayerNormParams(dim) if cfg.aap_stage1 else None
        self.aap = AapBank(dim, heads, cfg.aap_proxies, rng, module_id = "stage1.aap") if cfg.aap_stage1 else None

        self.stage2 = [StaBlock(dim, heads, rng, mlp = cfg.block_mlp, module_id = f"stage2.{i}") for i in range(cfg.depth_stage2)]
        self.iap2 = self._iap(rng, "stage2.iap") if cfg.iap_stage2 else None

        self.class_token3 = parameter(rng.normal(0, 0.02, size = dim))
        self.stage3 = [self._stage3_block(rng, i) for i in range(cfg.depth_stage3)]
        self.iap3 = self._iap(rng, "stage3.iap") if cfg.iap_stage3 else None

        # classifiers read layer-normed features, the triplet terms and retrieval read them raw
        self.neck_attr = LayerNormParams(cfg.aap_proxies * dim) if cfg.aap_stage1 else None
        self.head_attr = Linear(cfg.aap_proxies * dim, num_classes, rng) if cfg.aap_stage1 else None
        self.neck2 = LayerNormParams(dim)
        self.head2 = Linear(dim, num_classes, rng)
        self.neck3 = LayerNormParams(dim)
        self.head3 = Linear(dim, num_classes, rng)

        logger.debug(f"built model with {self.parameter_count()} parameters, N = {count}, d = {dim}, heads = {heads}")

    # private methods

    def _iap(self, rng, module_id):
        cfg = self.config
        return IapBank(cfg.dim, cfg.head_count, cfg.iap_prototypes, rng,
            double_norm = cfg.double_norm, length_scale = cfg.iap_length_scale, module_id = module_id)

    def _stage3_block(self, rng, index):
        cfg = self.config

        if cfg.stage3_block == "sta":
            return StaBlock(cfg.dim, cfg.head_count, rng, mlp = cfg.block_mlp, module_id = f"stage3.{index}")

        return AStaBlock(cfg.dim, cfg.head_count, cfg.tokens_per_frame, cfg.asta_proxies, rng,
            mlp = cfg.block_mlp, module_id = f"stage3.{index}")

    def _recode(self, seq, bank):
        if bank is None:
            return seq.class_token

        batch, frames, count, dim = seq.tokens.shape
        full = concat([reshape(seq.class_token, (batch, 1, dim)), reshape(seq.tokens, (batch, frames * count, dim))], axis = 1)

        return getitem(iap_forward(full, bank), (slice(None), 0, slice(None)))

    # public methods

    def forward(self, video, train = False, rng = None):
        """
        Run the three stages.
        Temporal patch shuffling only happens with ``train`` set, after patch embedding and
        before the positional table is added

        :param video: clips (B, T, 3, H, W), a single (T, 3, H, W) clip is a batch of one
        :param train: training mode
        :param rng: shuffle stream, required when ``train`` is set and shuffling is enabled

        :type video: numpy.ndarray or Tensor
        :type train: bool
        :type rng: numpy.random.Generator

        :rtype: StageOutputs
        """
        cfg = self.config
        video = as_tensor(video, like = self.pos)

        if video.ndim == 4:
            video = reshape(video, (1,) + video.shape)

        if video.ndim != 5 or video.shape[-3:] != (3, cfg.frame_height_px, cfg.frame_width_px):
            raise DimensionError(f"expected clips (B, T, 3, {cfg.frame_height_px}, {cfg.frame_width_px}), got {video.shape}")

        batch = video.shape[0]
        tokens = patchify_embed(video, self.embed, cfg.patch_px)

        if train and cfg.tps_probability > 0:
            tokens, _ = tps_apply(tokens, cfg.tps, rng)

        seq = TokenSeq(add_spatial_pos(tokens, self.pos), class_token = _batched_token(self.class_token, batch))

        for block in self.stage1:
            seq = sta_block(seq, block)

        attr_rep = None

        if self.aap is not None:
            frames, count, dim = seq.tokens.shape[1:]
            pooled = aap_forward(self.norm_aap(reshape(seq.tokens, (batch, frames * count, dim))), self.aap)
            attr_rep = reshape(pooled, (batch, cfg.aap_proxies * dim))

        for block in self.stage2:
            seq = sta_block(seq, block)

        c2 = self._recode(seq, self.iap2)

        seq = TokenSeq(seq.tokens, class_token = _batched_token(self.class_token3, batch))

        for block in self.stage3:
            seq = a_sta_block(seq, block) if isinstance(block, AStaBlock) else sta_block(seq, block)

        c3 = self._recode(seq, self.iap3)

        logits = {"stage2": self.head2(self.neck2(c2)), "stage3": self.head3(self.neck3(c3))}

        if attr_rep is not None:
            logits = {"attr": self.head_attr(self.neck_attr(attr_rep)), **logits}

        return StageOutputs(attr_rep, c2, c3, logits)

    __call__ = forward

    def aap_similarity(self):
        """
        :returns: pairwise cosine of the Stage-I attribute proxies
        :rtype: numpy.ndarray
        """
        if self.aap is None:
            raise ConfigError("the Stage-I attribute branch is disabled")

        return self.aap.similarity()

def _unit_rows(data, name):
    norms = np.linalg.norm(data, axis = 1, keepdims = True)

    if (norms == 0).any():
        raise DegenerateInputError(f"cannot normalize a zero {name} representation")

    return data / norms

def inference_representation(outs, stages = "I+II+III"):
    """
    L2-normalize each selected stage representation, concatenate them and normalize the row again.
    Every stage carries the same weight whatever its width, so the cosine of two joined rows is
    the mean of the per-stage cosines

    :param outs: eval-mode outputs
    :param stages: stage mask, any of ``stage_masks``

    :type outs: StageOutputs
    :type stages: str

    :returns: unit rows (B, D)
    :rtype: numpy.ndarray
    """
    parts = []

    for name in parse_stages(stages):
        value = outs.stage(name)

        if value is None:
            raise ConfigError(f"stage {name} has no representation in this model")

        data = np.asarray(value.data if isinstance(value, Tensor) else value, dtype = np.float64)
        data = data.reshape(data.shape[0], -1) if data.ndim > 1 else data.reshape(1, -1)
        parts.append(_unit_rows(data, f"stage {name}"))

    return _unit_rows(np.concatenate(parts, axis = 1), "joined")
