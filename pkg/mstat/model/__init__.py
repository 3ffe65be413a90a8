from mstat.model._config import ModelConfig, stage3_blocks
from mstat.model._mstat import (
    MstatModel, StageOutputs, stage_names, stage_masks, parse_stages,
    patchify, patchify_embed, add_spatial_pos, inference_representation
)
