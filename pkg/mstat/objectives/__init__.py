from mstat.objectives._losses import (
    LossConfig, LossReport, head_names, smoothing_variants,
    smoothed_targets, ce_label_smoothing, pairwise_distances, batch_hard_triplet, multi_head_loss
)
