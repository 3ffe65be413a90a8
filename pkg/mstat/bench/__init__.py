from mstat.bench._cost import (
    CostReport, variants, grid_frames, grid_tokens, grid_dims,
    divided_terms, count_attention_macs, joint_attention, measure_attention_macs,
    cost_report, run_cost_report, cost_grid, format_table
)
