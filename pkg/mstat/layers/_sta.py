from mstat.tensor import parameter, reshape, concat, mean
from mstat.layers._mixin import ParamMixin, LayerNormParams, Mlp
from mstat.layers._attention import AttentionParams, TokenSeq, temporal_attention, spatial_attention
from mstat.layers._proxy import AapBank, aap_forward
from mstat.util.exceptions import UsageError, EmptyInputError

class StaBlock(ParamMixin):
    """
    Spatio-temporal aggregation block: pre-norm temporal attention per spatial position,
    then pre-norm spatial attention per frame with the class token broadcast into every frame.
    Both residual branches are weighted by learnable scalars ``alpha`` and ``beta``, initialized to 1

    :param dim: token width d
    :param heads: head count n
    :param rng: initializer stream
    :param mlp: append a pre-norm feed-forward sublayer

    :type dim: int
    :type heads: int
    :type rng: numpy.random.Generator
    :type mlp: bool
    """
    def __init__(self, dim, heads, rng, mlp = False, module_id = ""):
        super().__init__(module_id)

        self.norm_t = LayerNormParams(dim)
        self.temporal = AttentionParams(dim, heads, rng, module_id = f"{module_id}.temporal")
        self.norm_s = LayerNormParams(dim)
        self.spatial = AttentionParams(dim, heads, rng, module_id = f"{module_id}.spatial")

        self.alpha = parameter(1.0)
        self.beta = parameter(1.0)

        self.mlp = Mlp(dim, 4 * dim, rng) if mlp else None

    def temporal_branch(self, seq):
        normed = TokenSeq(self.norm_t(seq.tokens))
        return temporal_attention(normed, self.temporal).tokens

class AStaBlock(StaBlock):
    """
    Attribute STA block. Inside the temporal branch every frame is first pooled into
    ``num_proxies`` attribute tokens, temporal attention runs over those attribute streams,
    and a second bank with one proxy per patch re-expands each frame to N tokens

    :param tokens_per_frame: N, the size of the re-expanding bank
    :param num_proxies: N_a of the compressing bank

    :type tokens_per_frame: int
    :type num_proxies: int
    """
    def __init__(self, dim, heads, tokens_per_frame, num_proxies, rng, mlp = False, module_id = ""):
        super().__init__(dim, heads, rng, mlp = mlp, module_id = module_id)

        self.pre_aap = AapBank(dim, heads, num_proxies, rng, module_id = f"{module_id}.pre_aap")
        self.post_aap = AapBank(dim, heads, tokens_per_frame, rng, module_id = f"{module_id}.post_aap")

    def temporal_branch(self, seq):
        attributes = aap_forward(self.norm_t(seq.tokens), self.pre_aap)
        mixed = temporal_attention(TokenSeq(attributes), self.temporal).tokens

        return aap_forward(mixed, self.post_aap)

def broadcast_class_token(seq):
    """
    Give every frame its own copy of the class token

    :type seq: TokenSeq

    :returns: ``seq`` with ``frame_class`` set to T copies of the class token
    :rtype: TokenSeq
    """
    if seq.class_token is None:
        raise UsageError("class token broadcast needs a class token")

    single = reshape(seq.class_token, seq.class_token.shape[:-1] + (1, seq.d))
    copies = concat([single] * seq.T, axis = -2)

    return TokenSeq(seq.tokens, class_token = seq.class_token, frame_class = copies)

def average_class_token(copies):
    """
    :param copies: per-frame class tokens (..., T, d)
    :type copies: Tensor

    :returns: their mean over frames (..., d)
    :rtype: Tensor
    """
    if copies.shape[-2] == 0:
        raise EmptyInputError("class token average over zero frames")

    return mean(copies, axis = -2)

def _spatial_stage(seq, block):
    broadcast = broadcast_class_token(seq)
    normed = TokenSeq(block.norm_s(broadcast.tokens), frame_class = block.norm_s(broadcast.frame_class))
    attended = spatial_attention(normed, block.spatial)

    tokens = broadcast.tokens + block.beta * attended.tokens
    class_token = average_class_token(broadcast.frame_class + block.beta * attended.frame_class)

    if block.mlp is not None:
        tokens = tokens + block.mlp(tokens)
        class_token = class_token + block.mlp(class_token)

    return TokenSeq(tokens, class_token = class_token)

def sta_block(seq, block):
    """
    S' = S + alpha SA_t(LN(S)), then [S'_t; c] + beta SA_s(LN([S'_t; c])) per frame with the class copies averaged back.
    The class token bypasses the temporal branch

    :param seq: tokens (..., T, N, d) with a class token (..., d)
    :param block: block parameters

    :type seq: TokenSeq
    :type block: StaBlock

    :returns: sequence of the same shapes
    :rtype: TokenSeq
    """
    if seq.class_token is None:
        raise UsageError("STA block needs a class token")

    tokens = seq.tokens + block.alpha * block.temporal_branch(seq)
    return _spatial_stage(TokenSeq(tokens, class_token = seq.class_token), block)

def a_sta_block(seq, block):
    """
    ``sta_block`` with the attribute-pooled temporal branch of an ``AStaBlock``

    :type seq: TokenSeq
    :type block: AStaBlock

    :rtype: TokenSeq
    """
    if not isinstance(block, AStaBlock):
        raise UsageError(f"a_sta_block needs an AStaBlock, not {type(block).__name__}")

    return sta_block(seq, block)
