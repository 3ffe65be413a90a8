import math

import numpy as np

from dataclasses import dataclass

from mstat.util.exceptions import ConfigError, DimensionError

@dataclass(frozen = True)
class PixelAugment:
    """
    Standard re-id clip augmentations. Each transform draws its parameters once per clip
    and applies them to every frame, so a clip stays temporally consistent
    """
    flip_probability: float = 0.5
    crop_probability: float = 0.5
    crop_padding_px: int = 2
    erase_probability: float = 0.5
    erase_area: tuple = (0.02, 0.4)
    erase_aspect: tuple = (0.3, 3.3)

    def __post_init__(self):
        for name in ("flip_probability", "crop_probability", "erase_probability"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1], not {getattr(self, name)}")

        if self.crop_padding_px < 0:
            raise ConfigError(f"crop_padding_px must be >= 0, not {self.crop_padding_px}")

    def __call__(self, clip, rng):
        return augment_clip(clip, self, rng)

def horizontal_flip(clip):
    return clip[..., ::-1].copy()

def padded_crop(clip, padding, top, left):
    """
    Zero-pad every frame by ``padding`` then cut the original size back out at (top, left)
    """
    height, width = clip.shape[-2:]
    padded = np.pad(clip, [(0, 0)] * (clip.ndim - 2) + [(padding, padding), (padding, padding)])

    return padded[..., top:top + height, left:left + width].copy()

def random_erase(clip, rng, area = (0.02, 0.4), aspect = (0.3, 3.3), attempts = 10):
    """
    Overwrite one rectangle of every frame with the same noise patch.
    Returns the clip untouched if no rectangle fitting the frame was drawn
    """
    height, width = clip.shape[-2:]

    for _ in range(attempts):
        target = rng.uniform(*area) * height * width
        ratio = math.exp(rng.uniform(math.log(aspect[0]), math.log(aspect[1])))

        h = int(round(math.sqrt(target * ratio)))
        w = int(round(math.sqrt(target / ratio)))

        if 0 < h <= height and 0 < w <= width:
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))

            out = clip.copy()
            out[..., top:top + h, left:left + w] = rng.uniform(0, 1, size = clip.shape[-3:-2] + (h, w))
            return out

    return clip

def augment_clip(clip, cfg, rng):
    """
    Flip, padded crop and erase a clip, each with its own coin

    :param clip: frames (T, 3, H, W)
    :param cfg: probabilities and ranges
    :param rng: the pixel stream

    :type clip: numpy.ndarray
    :type cfg: PixelAugment
    :type rng: numpy.random.Generator

    :rtype: numpy.ndarray
    """
    if clip.ndim != 4:
        raise DimensionError(f"clip must be (T, 3, H, W), got {clip.shape}")

    if rng.random() < cfg.flip_probability:
        clip = horizontal_flip(clip)

    if rng.random() < cfg.crop_probability and cfg.crop_padding_px:
        span = 2 * cfg.crop_padding_px + 1
        clip = padded_crop(clip, cfg.crop_padding_px, int(rng.integers(0, span)), int(rng.integers(0, span)))

    if rng.random() < cfg.erase_probability:
        clip = random_erase(clip, rng, cfg.erase_area, cfg.erase_aspect)

    return clip
