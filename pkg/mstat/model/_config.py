from dataclasses import dataclass, asdict, replace
from typing import Optional

from mstat.augment import TpsConfig
from mstat.layers import default_heads, double_norms
from mstat.util.exceptions import ConfigError

stage3_blocks = ("a-sta", "sta")

@dataclass(frozen = True)
class ModelConfig:
    """
    Shape and wiring of an MSTAT network. Defaults are the full-scale setting,
    ``ModelConfig.desk()`` is the small CPU setting
    """
    frame_height_px: int = 224
    frame_width_px: int = 112
    patch_px: int = 16
    frames_train: int = 8
    frames_test: int = 32
    heads: Optional[int] = None

    depth_stage1: int = 8
    depth_stage2: int = 3
    depth_stage3: int = 3

    aap_stage1: bool = True
    aap_proxies: int = 24
    asta_proxies: int = 16
    iap_prototypes: int = 64
    iap_stage2: bool = True
    iap_stage3: bool = True
    iap_length_scale: bool = True
    double_norm: str = "tokens-then-prototypes"
    stage3_block: str = "a-sta"
    block_mlp: bool = False

    tps_probability: float = 0.2
    tps_positions: int = 5

    def __post_init__(self):
        for name in ("frame_height_px", "frame_width_px", "patch_px", "frames_train", "frames_test",
                "aap_proxies", "asta_proxies", "iap_prototypes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, not {getattr(self, name)}")

        for name in ("depth_stage1", "depth_stage2", "depth_stage3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, not {getattr(self, name)}")

        if self.frame_height_px % self.patch_px or self.frame_width_px % self.patch_px:
            raise ConfigError(f"frame {self.frame_height_px}x{self.frame_width_px} is not divisible into {self.patch_px}px patches")

        if self.dim % self.head_count:
            raise ConfigError(f"token width {self.dim} is not divisible by {self.head_count} heads")

        if self.double_norm not in double_norms:
            raise ConfigError(f"double_norm must be one of {', '.join(double_norms)}, not {self.double_norm}")

        if self.stage3_block not in stage3_blocks:
            raise ConfigError(f"stage3_block must be one of {', '.join(stage3_blocks)}, not {self.stage3_block}")

        if self.tps_positions > self.tokens_per_frame:
            raise ConfigError(f"tps_positions {self.tps_positions} exceeds the {self.tokens_per_frame} tokens of a frame")

        # validates the probability
        self.tps

    @classmethod
    def full(cls, **overrides):
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides):
        """
        32x16 frames in 8px patches: N = 8 tokens of width 192 per frame, 3 heads, 4 frames per clip
        """
        settings = {
            "frame_height_px"   : 32,
            "frame_width_px"    : 16,
            "patch_px"          : 8,
            "frames_train"      : 4,
            "frames_test"       : 8,
            "heads"             : 3,
            "aap_proxies"       : 8,
            "asta_proxies"      : 4,
            "iap_prototypes"    : 16,
            "tps_positions"     : 2
        }

        settings.update(overrides)
        return cls(**settings)

    @property
    def tokens_per_frame(self):
        return (self.frame_height_px // self.patch_px) * (self.frame_width_px // self.patch_px)

    @property
    def dim(self):
        return 3 * self.patch_px ** 2

    @property
    def head_count(self):
        return self.heads if self.heads else default_heads(self.dim)

    @property
    def tps(self):
        return TpsConfig(probability = self.tps_probability, positions = self.tps_positions)

    def to_dict(self):
        return asdict(self)

    def replace(self, **changes):
        return replace(self, **changes)
