import numpy as np

from dataclasses import dataclass
from typing import Optional

from mstat.tensor import Tensor, getitem
from mstat.util.exceptions import ConfigError, DimensionError

@dataclass(frozen = True)
class TpsConfig:
    """
    Temporal patch shuffling settings.

    ``probability`` is the chance a sample is shuffled at all, ``positions`` (k) how many
    spatial positions get their temporal order permuted when it is.
    ``seed`` is only used when no generator is handed to ``tps_apply``
    """
    probability: float = 0.2
    positions: int = 5
    seed: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.probability <= 1:
            raise ConfigError(f"tps probability must lie in [0, 1], not {self.probability}")

        if self.positions < 0:
            raise ConfigError(f"tps positions must be >= 0, not {self.positions}")

@dataclass
class TpsDraw:
    """
    One sample's shuffle. ``index[t, n]`` is the frame whose token lands at (t, n)
    """
    index: np.ndarray
    positions: tuple
    fired: bool

    def is_identity(self):
        return bool((self.index == np.arange(self.index.shape[0])[:, None]).all())

def tps_index_map(frames, tokens_per_frame, cfg, rng):
    """
    Draw the temporal permutation of one sample.
    The firing coin is always drawn first so the stream advances the same way whatever ``p`` is

    :param frames: T
    :param tokens_per_frame: N
    :param cfg: shuffle settings
    :param rng: random stream

    :type frames: int
    :type tokens_per_frame: int
    :type cfg: TpsConfig
    :type rng: numpy.random.Generator

    :rtype: TpsDraw
    """
    if cfg.positions > tokens_per_frame:
        raise ConfigError(f"cannot shuffle {cfg.positions} positions of a frame with {tokens_per_frame} tokens")

    index = np.repeat(np.arange(frames)[:, None], tokens_per_frame, axis = 1)
    fired = bool(rng.random() < cfg.probability)

    if not fired or cfg.positions == 0:
        return TpsDraw(index, (), fired)

    chosen = tuple(int(n) for n in np.sort(rng.choice(tokens_per_frame, size = cfg.positions, replace = False)))

    for n in chosen:
        index[:, n] = rng.permutation(frames)

    return TpsDraw(index, chosen, fired)

def tps_apply(tokens, cfg, rng):
    """
    Shuffle patch tokens in time at randomly chosen spatial positions. Training only.

    Accepts one sample as an array (T, N, d), or a batch as a Tensor (B, T, N, d) in which
    case every sample gets its own draw and the gather stays on the gradient tape

    :param tokens: embedded patch tokens, no class token
    :param cfg: shuffle settings
    :param rng: random stream, a fresh one from ``cfg.seed`` if None

    :type tokens: numpy.ndarray or Tensor
    :type cfg: TpsConfig
    :type rng: numpy.random.Generator

    :returns: shuffled tokens of the same type and shape, and the draws
    :rtype: tuple<numpy.ndarray or Tensor, list<TpsDraw>>
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)

    if isinstance(tokens, Tensor):
        if tokens.ndim != 4:
            raise DimensionError(f"batched tps expects (B, T, N, d), got {tokens.shape}")

        batch, frames, count, _ = tokens.shape
        draws = [tps_index_map(frames, count, cfg, rng) for _ in range(batch)]

        if not any(draw.positions for draw in draws):
            return tokens, draws

        index = np.stack([draw.index for draw in draws])
        rows = np.arange(batch)[:, None, None]
        columns = np.arange(count)[None, None, :]

        return getitem(tokens, (rows, index, columns)), draws

    tokens = np.asarray(tokens)

    if tokens.ndim != 3:
        raise DimensionError(f"tps expects (T, N, d), got {tokens.shape}")

    draw = tps_index_map(tokens.shape[0], tokens.shape[1], cfg, rng)

    return tokens[draw.index, np.arange(tokens.shape[1])[None, :]], [draw]
