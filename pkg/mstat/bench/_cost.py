import logging

from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from mstat.tensor import Tensor, MacCounter, reshape, no_grad
from mstat.layers import AttentionParams, IapBank, TokenSeq, default_heads, self_attention, temporal_attention, spatial_attention, iap_forward
from mstat.util.exceptions import ConfigError, VerificationFailure

logger = logging.getLogger(__name__)

variants = (
    "joint",
    "divided",
    "iap"
)

grid_frames = (1, 2, 4, 8)
grid_tokens = (1, 4, 8, 98)
grid_dims = (16, 192, 768)

def divided_terms(frames, tokens, dim, class_token = False):
    """
    :returns: (temporal, spatial) attention MACs, the spatial one over N + 1 tokens with a class copy
    :rtype: tuple<int, int>
    """
    spatial_tokens = tokens + 1 if class_token else tokens
    return 2 * tokens * frames ** 2 * dim, 2 * frames * spatial_tokens ** 2 * dim

def count_attention_macs(frames, tokens, dim, variant, prototypes = None, include_projections = False, class_token = False):
    """
    Closed-form multiply-accumulate count of score computation plus value aggregation

    joint: 2 (T N)^2 d, divided: 2 N T^2 d + 2 T N^2 d, iap: 2 T N M d.
    With ``include_projections`` every self-attention adds 4 L d^2 for its q, k, v and output maps
    over L tokens, and IAP adds 2 T N d^2 for its query and output maps

    :param frames: T
    :param tokens: N per frame
    :param dim: d
    :param variant: ``joint``, ``divided`` or ``iap``
    :param prototypes: M, required by ``iap``
    :param include_projections: add projection MACs
    :param class_token: spatial attention carries a class copy per frame (divided only)

    :rtype: int
    """
    if min(frames, tokens, dim) < 1:
        raise ConfigError(f"dimensions must be positive, got T = {frames}, N = {tokens}, d = {dim}")

    length = frames * tokens

    if variant == "joint":
        macs = 2 * length ** 2 * dim
        return macs + (4 * length * dim ** 2 if include_projections else 0)

    if variant == "divided":
        temporal, spatial = divided_terms(frames, tokens, dim, class_token)
        spatial_length = frames * (tokens + 1 if class_token else tokens)
        return temporal + spatial + (4 * (length + spatial_length) * dim ** 2 if include_projections else 0)

    if variant == "iap":
        if not prototypes or prototypes < 1:
            raise ConfigError("the iap count needs a prototype count M >= 1")

        return 2 * length * prototypes * dim + (2 * length * dim ** 2 if include_projections else 0)

    raise ConfigError(f"variant must be one of {', '.join(variants)}, not {variant}")

def joint_attention(seq, params):
    """
    Reference joint space-time attention: one self-attention over all T N tokens.
    Only used for counting and comparison, never by the model

    :type seq: TokenSeq
    :type params: AttentionParams

    :rtype: TokenSeq
    """
    lead = seq.tokens.shape[:-3]
    flat = reshape(seq.tokens, lead + (seq.T * seq.N, seq.d))

    return TokenSeq(reshape(self_attention(flat, params), seq.tokens.shape), class_token = seq.class_token)

def _counted(counter, include_projections):
    return counter["attn"] + (counter["proj"] if include_projections else 0)

def measure_attention_macs(frames, tokens, dim, prototypes, heads = None, include_projections = False, seed = 0):
    """
    Run the three attention patterns once on random tokens under a ``MacCounter``

    :returns: instrumented counts by variant
    :rtype: dict<str, int>
    """
    rng = np.random.default_rng(seed)
    heads = heads if heads and dim % heads == 0 else default_heads(dim)
    tokens_in = Tensor(rng.standard_normal((frames, tokens, dim)))
    counts = {}

    with no_grad():
        params = AttentionParams(dim, heads, rng)

        with MacCounter() as counter:
            joint_attention(TokenSeq(tokens_in), params)

        counts["joint"] = _counted(counter, include_projections)

        with MacCounter() as counter:
            spatial_attention(temporal_attention(TokenSeq(tokens_in), params), params)

        counts["divided"] = _counted(counter, include_projections)

        bank = IapBank(dim, heads, prototypes, rng)

        with MacCounter() as counter:
            iap_forward(reshape(tokens_in, (frames * tokens, dim)), bank)

        counts["iap"] = _counted(counter, include_projections)

    return counts

@dataclass
class CostReport:
    frames: int
    tokens: int
    dim: int
    prototypes: int
    heads: int
    include_projections: bool
    macs_joint: int
    macs_divided: int
    macs_iap: int
    measured: Optional[dict] = None

    @property
    def ratio(self):
        return self.macs_divided / self.macs_joint

    def record(self):
        return {**asdict(self), "ratio": self.ratio}

    @classmethod
    def from_record(cls, data):
        data = {key: value for key, value in data.items() if key != "ratio"}
        return cls(**data)

    def verify(self):
        """
        :raises VerificationFailure: when an instrumented count differs from its closed form
        """
        if self.measured is None:
            return self

        expected = {"joint": self.macs_joint, "divided": self.macs_divided, "iap": self.macs_iap}
        wrong = {name: (self.measured[name], value) for name, value in expected.items() if self.measured[name] != value}

        if wrong:
            details = ", ".join(f"{name} counted {got} expected {want}" for name, (got, want) in wrong.items())
            raise VerificationFailure(f"MAC mismatch at T = {self.frames}, N = {self.tokens}, d = {self.dim}: {details}")

        return self

def cost_report(frames, tokens, dim, prototypes, heads = None, include_projections = False, measure = True):
    report = CostReport(
        frames, tokens, dim, prototypes, heads if heads else default_heads(dim), include_projections,
        count_attention_macs(frames, tokens, dim, "joint", include_projections = include_projections),
        count_attention_macs(frames, tokens, dim, "divided", include_projections = include_projections),
        count_attention_macs(frames, tokens, dim, "iap", prototypes, include_projections = include_projections)
    )

    if measure:
        report.measured = measure_attention_macs(frames, tokens, dim, prototypes, heads, include_projections)

    return report.verify()

def run_cost_report(cfg, frames = None, include_projections = False, measure = True):
    """
    Cost of one clip under a model configuration, checked against instrumented counts

    :param cfg: model shape
    :param frames: T, the training clip length if None

    :type cfg: ModelConfig
    :type frames: int

    :rtype: CostReport
    """
    return cost_report(frames or cfg.frames_train, cfg.tokens_per_frame, cfg.dim, cfg.iap_prototypes,
        cfg.head_count, include_projections, measure)

def cost_grid(frames = grid_frames, tokens = grid_tokens, dims = grid_dims, prototypes = 64, include_projections = False, measure = True):
    reports = []

    for dim in dims:
        for count in tokens:
            for length in frames:
                reports.append(cost_report(length, count, dim, prototypes, None, include_projections, measure))
                logger.debug(f"counted T = {length}, N = {count}, d = {dim}")

    return reports

def format_table(reports):
    """
    Aligned text table of cost reports
    """
    header = ("T", "N", "d", "M", "joint", "divided", "iap", "divided/joint")
    rows = [header] + [
        (str(r.frames), str(r.tokens), str(r.dim), str(r.prototypes), str(r.macs_joint), str(r.macs_divided), str(r.macs_iap), f"{r.ratio:.4f}")
        for r in reports
    ]

    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    return "\n".join("  ".join(cell.rjust(width) for cell, width in zip(row, widths)) for row in rows)
