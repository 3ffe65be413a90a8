from mstat.layers._mixin import ParamMixin, Linear, LayerNormParams, Mlp, xavier
from mstat.layers._attention import (
    AttentionParams, TokenSeq, default_heads,
    split_heads, merge_heads, attend, self_attention, temporal_attention, spatial_attention
)
from mstat.layers._proxy import (
    AapBank, IapBank, double_norms,
    init_aap_anisotropic, pairwise_cosine, aap_forward, iap_weights, iap_mixture, iap_forward
)
from mstat.layers._sta import StaBlock, AStaBlock, broadcast_class_token, average_class_token, sta_block, a_sta_block
