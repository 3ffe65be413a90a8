import logging, math

import numpy as np

from mstat.tensor import parameter, matmul, swapaxes, softmax_axis, l1_normalize_axis, record_attention
from mstat.layers._mixin import ParamMixin, xavier
from mstat.layers._attention import split_heads, merge_heads
from mstat.util.exceptions import ConfigError, DimensionError, EmptyInputError

logger = logging.getLogger(__name__)

double_norms = (
    "tokens-then-prototypes",
    "prototypes-then-tokens",
    "none"
)

def init_aap_anisotropic(num_proxies, head_dim, seed):
    """
    Draw an attribute bank whose rows come from different distributions.
    Every row gets its own diagonal covariance (per-coordinate scales, log-uniform over
    [e^-1.5, e^1.5]) and its own small mean, then rows are rescaled to unit RMS.
    Rows therefore stress different coordinates and their pairwise cosines spread out

    :param num_proxies: N_a
    :param head_dim: d'
    :param seed: int seed or a Generator

    :type num_proxies: int
    :type head_dim: int
    :type seed: int or numpy.random.Generator

    :returns: P_Q of shape (N_a, d')
    :rtype: numpy.ndarray
    """
    if num_proxies < 1 or head_dim < 1:
        raise ConfigError(f"attribute bank needs N_a >= 1 and d' >= 1, got {num_proxies} and {head_dim}")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    scales = np.exp(rng.uniform(-1.5, 1.5, size = (num_proxies, head_dim)))
    means = rng.normal(0, 0.1, size = (num_proxies, 1))
    rows = means + rng.standard_normal((num_proxies, head_dim)) * scales

    rms = np.sqrt((rows * rows).mean(axis = 1, keepdims = True))
    return rows / rms

def pairwise_cosine(rows):
    rows = np.asarray(rows, dtype = np.float64)
    unit = rows / np.linalg.norm(rows, axis = 1, keepdims = True)
    return unit @ unit.T

class AapBank(ParamMixin):
    """
    Attribute-aware proxies: a learnable query bank P_Q (one per head) with key and value projections

    :param dim: token width d
    :param heads: head count n
    :param num_proxies: N_a, the number of attribute tokens produced
    :param rng: initializer stream

    :type dim: int
    :type heads: int
    :type num_proxies: int
    :type rng: numpy.random.Generator
    """
    def __init__(self, dim, heads, num_proxies, rng, module_id = ""):
        super().__init__(module_id)

        if heads < 1 or dim % heads:
            raise ConfigError(f"token width {dim} is not divisible by {heads} heads")

        self.dim = dim
        self.heads = heads
        self.num_proxies = num_proxies

        self.proxies = parameter(np.stack([init_aap_anisotropic(num_proxies, dim // heads, rng) for _ in range(heads)]))
        self.w_k = parameter(xavier(rng, dim, dim))
        self.w_v = parameter(xavier(rng, dim, dim))

    def similarity(self):
        """
        :returns: pairwise cosine of the proxies, heads concatenated along the feature axis
        :rtype: numpy.ndarray
        """
        rows = np.concatenate(list(self.proxies.data), axis = 1)
        return pairwise_cosine(rows)

class IapBank(ParamMixin):
    """
    Identity-aware proxies: learnable key and value prototypes P_K, P_V (one pair per head),
    a query projection and an output projection

    :param dim: token width d
    :param heads: head count n
    :param num_prototypes: M
    :param rng: initializer stream
    :param double_norm: order of the L1 and softmax normalizations, see ``double_norms``
    :param length_scale: multiply the token-axis L1 normalized logits by the token count

    :type dim: int
    :type heads: int
    :type num_prototypes: int
    :type rng: numpy.random.Generator
    :type double_norm: str
    :type length_scale: bool
    """
    def __init__(self, dim, heads, num_prototypes, rng, double_norm = "tokens-then-prototypes", length_scale = True, module_id = ""):
        super().__init__(module_id)

        if heads < 1 or dim % heads:
            raise ConfigError(f"token width {dim} is not divisible by {heads} heads")

        if num_prototypes < 1:
            raise ConfigError(f"identity bank needs M >= 1, got {num_prototypes}")

        if double_norm not in double_norms:
            raise ConfigError(f"double_norm must be one of {', '.join(double_norms)}, not {double_norm}")

        self.dim = dim
        self.heads = heads
        self.num_prototypes = num_prototypes
        self.double_norm = double_norm
        self.length_scale = length_scale

        head_dim = dim // heads

        self.w_q = parameter(xavier(rng, dim, dim))
        self.keys = parameter(rng.standard_normal((heads, num_prototypes, head_dim)))
        self.values = parameter(rng.standard_normal((heads, num_prototypes, head_dim)))
        self.w_o = parameter(xavier(rng, dim, dim))
        self.b_o = parameter(np.zeros(dim))

def aap_forward(s, bank):
    """
    Pool a token set into N_a attribute tokens: the proxies query the tokens' keys,
    the softmax runs over the token axis and re-weights the values.
    The result depends on the token multiset only

    :param s: tokens (..., N, d)
    :param bank: attribute bank

    :type s: Tensor
    :type bank: AapBank

    :returns: attribute tokens (..., N_a, d)
    :rtype: Tensor
    """
    if s.shape[-2] == 0:
        raise EmptyInputError("attribute proxies over an empty token set")

    if s.shape[-1] != bank.dim:
        raise DimensionError(f"token width {s.shape[-1]} != bank width {bank.dim}")

    k = split_heads(matmul(s, bank.w_k), bank.heads)
    v = split_heads(matmul(s, bank.w_v), bank.heads)

    scores = matmul(bank.proxies, swapaxes(k, -1, -2), tag = "attn") * (1 / math.sqrt(k.shape[-1]))
    weights = softmax_axis(scores, -1)
    record_attention(bank.module_id, weights.data)

    return merge_heads(matmul(weights, v, tag = "attn"))

def iap_weights(s, bank):
    """
    Per-head affinity of every token to every prototype after double normalization.
    In the default order the logits are L1 normalized along the token axis, then a
    softmax along the prototype axis makes each token's row a point on the M-simplex

    :param s: tokens (..., N, d)

    :returns: weights (..., n, N, M)
    :rtype: Tensor
    """
    if s.shape[-2] == 0:
        raise EmptyInputError("identity proxies over an empty token set")

    if s.shape[-1] != bank.dim:
        raise DimensionError(f"token width {s.shape[-1]} != bank width {bank.dim}")

    q = split_heads(matmul(s, bank.w_q), bank.heads)
    logits = matmul(q, swapaxes(bank.keys, -1, -2), tag = "attn") * (1 / math.sqrt(q.shape[-1]))
    length = s.shape[-2]

    if bank.double_norm == "tokens-then-prototypes":
        logits = l1_normalize_axis(logits, -2)

        if bank.length_scale:
            logits = logits * float(length)

        return softmax_axis(logits, -1)

    if bank.double_norm == "prototypes-then-tokens":
        return softmax_axis(l1_normalize_axis(logits, -1), -2)

    return softmax_axis(logits, -1)

def iap_mixture(s, bank):
    """
    :returns: per-head re-coded tokens (..., n, N, d') before the output projection, and the weights
    :rtype: tuple<Tensor, Tensor>
    """
    weights = iap_weights(s, bank)
    record_attention(bank.module_id, weights.data)

    return matmul(weights, bank.values, tag = "attn"), weights

def iap_forward(s, bank):
    """
    Re-code every token, the class token at row 0 included, as a mixture of the value prototypes

    :param s: tokens (..., N, d), class token first
    :param bank: identity bank

    :type s: Tensor
    :type bank: IapBank

    :returns: re-coded tokens (..., N, d)
    :rtype: Tensor
    """
    if bank.num_prototypes > s.shape[-2]:
        logger.warning(f"{bank.module_id or 'identity bank'}: {bank.num_prototypes} prototypes for only {s.shape[-2]} tokens")

    mixture, _ = iap_mixture(s, bank)
    return matmul(merge_heads(mixture), bank.w_o) + bank.b_o
